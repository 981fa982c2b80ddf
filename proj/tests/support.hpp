// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/backends.hpp"
#include "tinyedit/geometry.hpp"
#include "tinyedit/image.hpp"
#include "tinyedit/pipeline.hpp"
#include "tinyedit/sample.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testing
{

using namespace tinyedit;
namespace fs = std::filesystem;

/// Fresh directory removed on destruction.
class TempDir
{
  public:
    TempDir()
    {
        static std::atomic<int> counter { 0 };
        std::random_device rd;
        _path = fs::temp_directory_path()
                / ("tinyedit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(_path);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return _path; }
    fs::path operator/(const std::string& name) const { return _path / name; }

  private:
    fs::path _path;
};

inline void write_text(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

/// Deterministic gradient-plus-texture image.
inline Image pattern_image(int width, int height, unsigned seed = 1)
{
    Image img(width, height);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> jitter(0, 40);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img.set(x, y,
                    { static_cast<std::uint8_t>((x * 7 + jitter(rng)) % 256),
                      static_cast<std::uint8_t>((y * 5 + jitter(rng)) % 256),
                      static_cast<std::uint8_t>((x + y + jitter(rng)) % 256) });
    return img;
}

inline Image random_image(std::mt19937& rng, int width, int height)
{
    Image img(width, height);
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& p: img.pixels())
        p = static_cast<std::uint8_t>(byte(rng));
    return img;
}

inline void fill_rect(Image& img, const BBox& box, Rgb color)
{
    for (int y = box.y1; y < box.y2; ++y)
        for (int x = box.x1; x < box.x2; ++x)
            img.set(x, y, color);
}

inline BBox random_box(std::mt19937& rng, ImageDims dims, int min_side = 1)
{
    std::uniform_int_distribution<int> xs(0, dims.width - min_side);
    std::uniform_int_distribution<int> ys(0, dims.height - min_side);
    auto const x1 = xs(rng);
    auto const y1 = ys(rng);
    std::uniform_int_distribution<int> ws(min_side, dims.width - x1);
    std::uniform_int_distribution<int> hs(min_side, dims.height - y1);
    return { x1, y1, x1 + ws(rng), y1 + hs(rng) };
}

/// Union area by painting every pixel.
inline std::int64_t raster_union_area(std::span<const BBox> boxes, ImageDims dims)
{
    std::vector<std::uint8_t> painted(static_cast<std::size_t>(dims.area()), 0);
    for (const auto& b: boxes)
        for (int y = std::max(0, b.y1); y < std::min(dims.height, b.y2); ++y)
            for (int x = std::max(0, b.x1); x < std::min(dims.width, b.x2); ++x)
                painted[static_cast<std::size_t>(y) * static_cast<std::size_t>(dims.width) + static_cast<std::size_t>(x)] = 1;
    return std::count(painted.begin(), painted.end(), 1);
}

struct OracleRegion
{
    BBox box;
    int count = 0;
};

/// Difference regions by breadth-first flood fill over the changed-pixel mask,
/// then the merge / filter / order / cap rules.
inline std::vector<OracleRegion> oracle_diff_regions(const Image& a, const Image& b, const DiffParams& p)
{
    auto const w = a.width();
    auto const h = a.height();
    std::vector<std::uint8_t> changed(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
        {
            auto const pa = a.at(x, y);
            auto const pb = b.at(x, y);
            auto const d = std::max({ std::abs(pa.r - pb.r), std::abs(pa.g - pb.g), std::abs(pa.b - pb.b) });
            changed[static_cast<std::size_t>(y * w + x)] = d > p.intensity_threshold;
        }
    std::vector<std::uint8_t> seen(changed.size(), 0);
    std::vector<OracleRegion> regions;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
        {
            auto const start = static_cast<std::size_t>(y * w + x);
            if (!changed[start] || seen[start])
                continue;
            OracleRegion r { { x, y, x + 1, y + 1 }, 0 };
            std::queue<std::pair<int, int>> queue;
            queue.push({ x, y });
            seen[start] = 1;
            while (!queue.empty())
            {
                auto [cx, cy] = queue.front();
                queue.pop();
                ++r.count;
                r.box = { std::min(r.box.x1, cx), std::min(r.box.y1, cy), std::max(r.box.x2, cx + 1),
                          std::max(r.box.y2, cy + 1) };
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                    {
                        auto const nx = cx + dx;
                        auto const ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h)
                            continue;
                        auto const n = static_cast<std::size_t>(ny * w + nx);
                        if (changed[n] && !seen[n])
                        {
                            seen[n] = 1;
                            queue.push({ nx, ny });
                        }
                    }
            }
            regions.push_back(r);
        }

    auto gap = [](const BBox& u, const BBox& v) {
        auto const gx = std::max({ 0, u.x1 - v.x2, v.x1 - u.x2 });
        auto const gy = std::max({ 0, u.y1 - v.y2, v.y1 - u.y2 });
        return std::max(gx, gy);
    };
    for (bool again = true; again;)
    {
        again = false;
        for (std::size_t i = 0; i < regions.size() && !again; ++i)
            for (std::size_t j = 0; j < regions.size() && !again; ++j)
                if (i != j && gap(regions[i].box, regions[j].box) < p.merge_distance)
                {
                    auto& u = regions[i];
                    const auto& v = regions[j];
                    u.box = { std::min(u.box.x1, v.box.x1), std::min(u.box.y1, v.box.y1),
                              std::max(u.box.x2, v.box.x2), std::max(u.box.y2, v.box.y2) };
                    u.count += v.count;
                    regions.erase(regions.begin() + static_cast<std::ptrdiff_t>(j));
                    again = true;
                }
    }
    std::vector<OracleRegion> kept;
    for (const auto& r: regions)
        if (r.count >= p.min_region_area)
            kept.push_back(r);
    std::sort(kept.begin(), kept.end(), [](const OracleRegion& l, const OracleRegion& r) {
        return std::tuple(-l.count, l.box.y1, l.box.x1) < std::tuple(-r.count, r.box.y1, r.box.x1);
    });
    if (kept.size() > static_cast<std::size_t>(p.max_regions))
        kept.resize(static_cast<std::size_t>(p.max_regions));
    return kept;
}

enum class Level
{
    Nominal,
    Ordinal,
    Interval,
};

/// Alpha from the definitional sums: every ordered pair of ratings inside a
/// unit (weighted 1/(m_u - 1)) for D_o and every ordered pair of pairable
/// ratings across the whole data for D_e.
inline double oracle_alpha(const std::vector<std::vector<std::optional<int>>>& ratings, Level level)
{
    std::vector<std::vector<int>> units;
    for (const auto& row: ratings)
    {
        std::vector<int> u;
        for (const auto& v: row)
            if (v)
                u.push_back(*v);
        if (u.size() >= 2)
            units.push_back(u);
    }
    std::vector<int> pooled;
    for (const auto& u: units)
        pooled.insert(pooled.end(), u.begin(), u.end());
    auto const n = static_cast<double>(pooled.size());
    std::map<int, double> freq;
    for (auto v: pooled)
        freq[v] += 1.0;

    auto dist = [&](int c, int k) -> double {
        if (c == k)
            return 0.0;
        switch (level)
        {
            case Level::Nominal: return 1.0;
            case Level::Interval: return double(c - k) * double(c - k);
            case Level::Ordinal:
            {
                double s = 0.0;
                for (const auto& [g, ng]: freq)
                    if (g >= std::min(c, k) && g <= std::max(c, k))
                        s += ng;
                s -= (freq[c] + freq[k]) / 2.0;
                return s * s;
            }
        }
        return 0.0;
    };

    double observed = 0.0;
    for (const auto& u: units)
    {
        double within = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            for (std::size_t j = 0; j < u.size(); ++j)
                if (i != j)
                    within += dist(u[i], u[j]);
        observed += within / double(u.size() - 1);
    }
    observed /= n;

    double expected = 0.0;
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = 0; j < pooled.size(); ++j)
            if (i != j)
                expected += dist(pooled[i], pooled[j]);
    expected /= n * (n - 1.0);
    return 1.0 - observed / expected;
}

/// Editor that paints the crop a solid colour, or fails on chosen calls.
class StubEditor: public EditorBackend
{
  public:
    explicit StubEditor(std::set<int> failing_calls = {}): _failing(std::move(failing_calls)) {}
    Image edit(const Image& image, std::string_view) override
    {
        auto const call = ++_calls;
        if (_failing.contains(call))
            throw BackendError(BackendError::Kind::Unreachable, "stub editor offline");
        return Image(image.width(), image.height(), { 10, 200, 30 });
    }
    [[nodiscard]] int calls() const { return _calls; }

  private:
    std::set<int> _failing;
    int _calls = 0;
};

/// Verifier answering from a fixed list; rejects once the list runs out.
class StubVerifier: public Verifier
{
  public:
    explicit StubVerifier(std::vector<bool> answers): _answers(std::move(answers)) {}
    bool accept(const EditSample&, const Image&, int attempt) override
    {
        attempts.push_back(attempt);
        auto const i = attempts.size() - 1;
        return i < _answers.size() && _answers[i];
    }
    std::vector<int> attempts;

  private:
    std::vector<bool> _answers;
};

class StubDetector: public DetectorBackend
{
  public:
    explicit StubDetector(std::vector<Detection> result, bool fail = false)
        : _result(std::move(result)), _fail(fail)
    {
    }
    std::vector<Detection> detect(const Image&, std::string_view query) override
    {
        queries.emplace_back(query);
        if (_fail)
            throw BackendError(BackendError::Kind::Timeout, "stub detector timed out");
        return _result;
    }
    std::vector<std::string> queries;

  private:
    std::vector<Detection> _result;
    bool _fail;
};

class StubEnhancer: public EnhancerBackend
{
  public:
    enum class Behaviour
    {
        Scale,
        Fail,
        WrongAspect,
    };
    explicit StubEnhancer(Behaviour behaviour = Behaviour::Scale): _behaviour(behaviour) {}
    Image enhance(const Image& image, int scale) override
    {
        ++calls;
        switch (_behaviour)
        {
            case Behaviour::Fail: throw BackendError(BackendError::Kind::Http, "stub enhancer 500", 500);
            case Behaviour::WrongAspect: return Image(image.width() * scale, image.width() * scale, kWhite);
            case Behaviour::Scale: break;
        }
        return Image(image.width() * scale, image.height() * scale, { 1, 2, 3 });
    }
    int calls = 0;

  private:
    Behaviour _behaviour;
};

/// A small on-disk fixture: a 96x96 source with one or two targets, its
/// reference and an edited image per model.
struct Fixture
{
    std::vector<EditSample> samples;
    fs::path dataset;
    fs::path image_root;
};

inline EditSample fixture_sample(const std::string& id, EditType type, std::vector<BBox> boxes)
{
    EditSample s;
    s.id = id;
    s.source_image = "src/" + id + ".png";
    s.reference_image = "ref/" + id + ".png";
    s.source_caption = "a red cup on a wooden table";
    s.reference_caption = "a blue cup on a wooden table";
    s.target_object = "cup";
    s.edit_type = type;
    s.instruction = "Change the color of the cup to blue.";
    s.target_bboxes = std::move(boxes);
    s.provenance.question = "What color is the cup?";
    s.provenance.options = { "red", "blue", "green" };
    s.provenance.answer = 0;
    s.provenance.negative_option = 1;
    s.status = SampleStatus::Verified;
    return s;
}

/// Writes `count` verified samples plus edited images for each model under root.
inline Fixture make_fixture(const fs::path& root, int count, const std::vector<std::string>& models)
{
    Fixture f;
    f.image_root = root;
    static constexpr std::array<EditType, 4> kTypes { EditType::Color, EditType::Material, EditType::Shape,
                                                      EditType::Removal };
    for (int i = 0; i < count; ++i)
    {
        auto const id = "s" + std::to_string(i);
        std::vector<BBox> boxes { { 20, 20, 44, 40 } };
        if (i % 2 == 1)
            boxes.push_back({ 60, 50, 80, 74 });
        auto sample = fixture_sample(id, kTypes[static_cast<std::size_t>(i) % kTypes.size()], boxes);
        auto source = pattern_image(96, 96, static_cast<unsigned>(i + 1));
        auto reference = source;
        for (const auto& b: boxes)
            fill_rect(reference, b, { 0, 0, 255 });
        write_png(source, root / sample.source_image);
        write_png(reference, root / *sample.reference_image);
        for (const auto& m: models)
        {
            auto edited = source;
            fill_rect(edited, boxes.front(), { 0, 0, 200 });
            write_png(edited, root / "edits" / m / (id + ".png"));
        }
        f.samples.push_back(std::move(sample));
    }
    f.dataset = root / "dataset.jsonl";
    save_dataset(f.dataset, f.samples);
    return f;
}

} // namespace testing
