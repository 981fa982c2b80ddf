// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/sample.hpp"

#include "tinyedit/image.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace tinyedit
{

namespace
{

struct EditTypeNames
{
    EditType type;
    std::string_view token;
    std::string_view display;
};

constexpr std::array<EditTypeNames, 7> kEditTypeNames { {
    { EditType::Material, "material", "Change Material" },
    { EditType::Color, "color", "Change Color" },
    { EditType::OCR, "ocr", "Change OCR" },
    { EditType::Shape, "shape", "Change Shape" },
    { EditType::Removal, "removal", "Removal Object" },
    { EditType::Replacement, "replacement", "Replace Object" },
    { EditType::Count, "count", "Change Count" },
} };

constexpr std::array<std::string_view, 4> kIFNames { "Localization Failure", "Wrong Action",
                                                     "Over Modification", "Flawless Execution" };
constexpr std::array<std::string_view, 4> kVCNames { "Scene Collapse", "Multiple Anomalies",
                                                     "Single Anomaly", "Perfect Consistency" };

std::string normalize_label_text(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (char c: text)
    {
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string lower(std::string_view text)
{
    std::string out(text);
    std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

BBox enclosing_box(std::span<const BBox> boxes)
{
    if (boxes.empty())
        throw std::invalid_argument("enclosing_box: no boxes");
    auto out = boxes.front();
    for (const auto& b: boxes)
    {
        out.x1 = std::min(out.x1, b.x1);
        out.y1 = std::min(out.y1, b.y1);
        out.x2 = std::max(out.x2, b.x2);
        out.y2 = std::max(out.y2, b.y2);
    }
    return out;
}

std::string to_string(const BBox& box)
{
    return fmt::format("[{}, {}, {}, {}]", box.x1, box.y1, box.x2, box.y2);
}

std::string_view to_token(EditType type)
{
    for (const auto& names: kEditTypeNames)
        if (names.type == type)
            return names.token;
    return "unknown";
}

std::string_view display_name(EditType type)
{
    for (const auto& names: kEditTypeNames)
        if (names.type == type)
            return names.display;
    return "Unknown";
}

std::optional<EditType> parse_edit_type(std::string_view token)
{
    auto const key = lower(token);
    for (const auto& names: kEditTypeNames)
        if (names.token == key || lower(names.display) == key)
            return names.type;
    return std::nullopt;
}

std::string_view to_token(Criterion criterion)
{
    return criterion == Criterion::InstructionFollowing ? "if" : "vc";
}

std::optional<Criterion> parse_criterion(std::string_view token)
{
    auto const key = lower(token);
    if (key == "if" || key == "instruction following")
        return Criterion::InstructionFollowing;
    if (key == "vc" || key == "visual consistency")
        return Criterion::VisualConsistency;
    return std::nullopt;
}

std::string_view label_name(IFLabel label)
{
    return kIFNames.at(static_cast<std::size_t>(points(label) - 1));
}

std::string_view label_name(VCLabel label)
{
    return kVCNames.at(static_cast<std::size_t>(points(label) - 1));
}

RubricLabel RubricLabel::from_points(Criterion criterion, int points)
{
    if (points < 1 || points > 4)
        throw std::invalid_argument(fmt::format("rubric points out of range: {}", points));
    return RubricLabel(criterion, points);
}

std::optional<RubricLabel> RubricLabel::parse(Criterion criterion, std::string_view text)
{
    auto const normalized = normalize_label_text(text);
    auto const& names = criterion == Criterion::InstructionFollowing ? kIFNames : kVCNames;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (normalize_label_text(names[i]) == normalized)
            return RubricLabel(criterion, static_cast<int>(i) + 1);
    return std::nullopt;
}

std::array<RubricLabel, 4> RubricLabel::all(Criterion criterion)
{
    return { RubricLabel(criterion, 1), RubricLabel(criterion, 2), RubricLabel(criterion, 3),
             RubricLabel(criterion, 4) };
}

std::string_view RubricLabel::name() const
{
    auto const& names = _criterion == Criterion::InstructionFollowing ? kIFNames : kVCNames;
    return names.at(static_cast<std::size_t>(_points - 1));
}

IFLabel RubricLabel::as_if() const
{
    if (_criterion != Criterion::InstructionFollowing)
        throw std::logic_error("RubricLabel::as_if on a visual-consistency label");
    return static_cast<IFLabel>(_points);
}

VCLabel RubricLabel::as_vc() const
{
    if (_criterion != Criterion::VisualConsistency)
        throw std::logic_error("RubricLabel::as_vc on an instruction-following label");
    return static_cast<VCLabel>(_points);
}

std::string_view to_token(SampleStatus status)
{
    switch (status)
    {
        case SampleStatus::Draft: return "draft";
        case SampleStatus::Verified: return "verified";
        case SampleStatus::Discarded: return "discarded";
    }
    return "draft";
}

std::optional<SampleStatus> parse_sample_status(std::string_view token)
{
    auto const key = lower(token);
    if (key == "draft")
        return SampleStatus::Draft;
    if (key == "verified")
        return SampleStatus::Verified;
    if (key == "discarded")
        return SampleStatus::Discarded;
    return std::nullopt;
}

bool ValidationReport::ok() const
{
    return std::ranges::none_of(violations, [](const Violation& v) { return !v.warning; });
}

bool ValidationReport::has(std::string_view code) const
{
    return std::ranges::any_of(violations, [code](const Violation& v) { return v.code == code; });
}

void ValidationReport::add(std::string code, std::string message, bool warning)
{
    violations.push_back({ std::move(code), std::move(message), warning });
}

std::string ValidationReport::summary() const
{
    std::string out;
    for (const auto& v: violations)
    {
        if (!out.empty())
            out += "; ";
        out += v.code;
        if (!v.message.empty())
            out += ": " + v.message;
    }
    return out;
}

ValidationReport validate_sample(const EditSample& sample, ImageDims source_dims)
{
    ValidationReport report;
    if (sample.id.empty())
        report.add("missing-id", "sample id is empty");
    if (sample.instruction.empty())
        report.add("missing-instruction", "instruction is empty");

    if (sample.status == SampleStatus::Verified && sample.target_bboxes.empty())
        report.add("missing-target-bbox", "verified sample without target boxes");

    for (std::size_t i = 0; i < sample.target_bboxes.size(); ++i)
    {
        auto const& box = sample.target_bboxes[i];
        if (box.x2 <= box.x1 || box.y2 <= box.y1)
            report.add("bbox-degenerate", fmt::format("target {} {} has no positive extent", i, to_string(box)));
        else if (box.x1 < 0 || box.y1 < 0)
            report.add("bbox-negative-coordinate", fmt::format("target {} {}", i, to_string(box)));
        else if (!box.within(source_dims))
            report.add("bbox-out-of-bounds",
                       fmt::format("target {} {} exceeds {}x{}", i, to_string(box), source_dims.width,
                                   source_dims.height));
    }

    auto const has_reference = sample.reference_image.has_value() && !sample.reference_image->empty();
    if (sample.status == SampleStatus::Verified && !has_reference)
        report.add("missing-reference-image", "verified sample without a reference image");
    if (sample.status != SampleStatus::Verified && has_reference)
        report.add("unexpected-reference-image", "only verified samples carry a reference image");
    return report;
}

ValidationReport validate_sample(const EditSample& sample, const std::filesystem::path& base_dir)
{
    ImageDims dims;
    try
    {
        dims = read_image_dims(base_dir / sample.source_image);
    }
    catch (const std::exception& e)
    {
        ValidationReport report;
        report.add("image-unreadable", fmt::format("{}: {}", sample.source_image, e.what()));
        return report;
    }
    auto report = validate_sample(sample, dims);
    if (sample.reference_image && !sample.reference_image->empty())
    {
        try
        {
            auto const ref_dims = read_image_dims(base_dir / *sample.reference_image);
            if (ref_dims != dims)
                report.add("reference-dims-mismatch", "reference and source dimensions differ", true);
        }
        catch (const std::exception& e)
        {
            report.add("image-unreadable", fmt::format("{}: {}", *sample.reference_image, e.what()));
        }
    }
    return report;
}

ValidationReport validate_raw_sample(const RawVQASample& raw, bool need_counterfactual)
{
    ValidationReport report;
    if (raw.question.empty())
        report.add("missing-question", "question is empty");
    if (raw.answer_key < 0 || raw.answer_key >= static_cast<int>(raw.options.size()))
        report.add("answer-key-out-of-range",
                   fmt::format("answer key {} with {} options", raw.answer_key, raw.options.size()));
    if (need_counterfactual && raw.options.size() < 2)
        report.add("no-counterfactual-option", "at least two options are needed to pick an incorrect one");
    return report;
}

nlohmann::ordered_json to_json(const BBox& box)
{
    return nlohmann::ordered_json::array({ box.x1, box.y1, box.x2, box.y2 });
}

BBox bbox_from_json(const nlohmann::json& json)
{
    if (!json.is_array() || json.size() != 4)
        throw DatasetError("bbox must be an array of four integers");
    for (const auto& v: json)
        if (!v.is_number_integer())
            throw DatasetError("bbox coordinates must be integers");
    return { json[0].get<int>(), json[1].get<int>(), json[2].get<int>(), json[3].get<int>() };
}

nlohmann::ordered_json to_json(const EditSample& sample)
{
    nlohmann::ordered_json j;
    j["id"] = sample.id;
    j["source_image"] = sample.source_image;
    if (sample.reference_image)
        j["reference_image"] = *sample.reference_image;
    j["source_caption"] = sample.source_caption;
    j["reference_caption"] = sample.reference_caption;
    j["target_object"] = sample.target_object;
    j["edit_type"] = std::string(to_token(sample.edit_type));
    j["instruction"] = sample.instruction;
    auto boxes = nlohmann::ordered_json::array();
    for (const auto& b: sample.target_bboxes)
        boxes.push_back(to_json(b));
    j["target_bboxes"] = std::move(boxes);

    nlohmann::ordered_json prov;
    prov["question"] = sample.provenance.question;
    prov["options"] = sample.provenance.options;
    if (sample.provenance.answer)
        prov["answer"] = *sample.provenance.answer;
    if (sample.provenance.negative_option)
        prov["negative_option"] = *sample.provenance.negative_option;
    if (sample.provenance.seed)
        prov["seed"] = *sample.provenance.seed;
    j["provenance"] = std::move(prov);
    j["status"] = std::string(to_token(sample.status));
    return j;
}

EditSample sample_from_json(const nlohmann::json& j)
{
    try
    {
        EditSample s;
        s.id = j.at("id").get<std::string>();
        s.source_image = j.at("source_image").get<std::string>();
        if (j.contains("reference_image") && !j["reference_image"].is_null())
            s.reference_image = j["reference_image"].get<std::string>();
        s.source_caption = j.value("source_caption", std::string {});
        s.reference_caption = j.value("reference_caption", std::string {});
        s.target_object = j.value("target_object", std::string {});
        auto const type = parse_edit_type(j.at("edit_type").get<std::string>());
        if (!type)
            throw DatasetError(fmt::format("unknown edit_type '{}'", j["edit_type"].get<std::string>()));
        s.edit_type = *type;
        s.instruction = j.at("instruction").get<std::string>();
        if (j.contains("target_bboxes"))
            for (const auto& b: j["target_bboxes"])
                s.target_bboxes.push_back(bbox_from_json(b));
        if (j.contains("provenance") && j["provenance"].is_object())
        {
            auto const& p = j["provenance"];
            s.provenance.question = p.value("question", std::string {});
            s.provenance.options = p.value("options", std::vector<std::string> {});
            if (p.contains("answer") && !p["answer"].is_null())
                s.provenance.answer = p["answer"].get<int>();
            if (p.contains("negative_option") && !p["negative_option"].is_null())
                s.provenance.negative_option = p["negative_option"].get<int>();
            if (p.contains("seed") && !p["seed"].is_null())
                s.provenance.seed = p["seed"].get<std::uint64_t>();
        }
        auto const status = parse_sample_status(j.value("status", std::string { "draft" }));
        if (!status)
            throw DatasetError(fmt::format("unknown status '{}'", j["status"].get<std::string>()));
        s.status = *status;
        return s;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatasetError(fmt::format("malformed sample record: {}", e.what()));
    }
}

std::string encode_sample(const EditSample& sample)
{
    return to_json(sample).dump();
}

EditSample decode_sample(std::string_view line)
{
    auto const parsed = nlohmann::json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object())
        throw DatasetError("sample line is not a JSON object");
    return sample_from_json(parsed);
}

RawVQASample raw_sample_from_json(const nlohmann::json& j)
{
    try
    {
        RawVQASample raw;
        raw.id = j.at("id").get<std::string>();
        raw.image = j.at("image").get<std::string>();
        raw.question = j.at("question").get<std::string>();
        raw.options = j.at("options").get<std::vector<std::string>>();
        raw.answer_key = j.at("answer").get<int>();
        return raw;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatasetError(fmt::format("malformed raw VQA record: {}", e.what()));
    }
}

nlohmann::ordered_json to_json(const RawVQASample& raw)
{
    nlohmann::ordered_json j;
    j["id"] = raw.id;
    j["image"] = raw.image;
    j["question"] = raw.question;
    j["options"] = raw.options;
    j["answer"] = raw.answer_key;
    return j;
}

namespace
{

template <typename Fn>
void for_each_jsonl_line(const std::filesystem::path& path, Fn&& fn)
{
    std::ifstream in(path);
    if (!in)
        throw DatasetError(fmt::format("cannot open {}", path.string()));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try
        {
            fn(line);
        }
        catch (const DatasetError& e)
        {
            throw DatasetError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
}

} // namespace

std::vector<EditSample> load_dataset(const std::filesystem::path& path)
{
    std::vector<EditSample> samples;
    for_each_jsonl_line(path, [&](const std::string& line) { samples.push_back(decode_sample(line)); });
    return samples;
}

std::vector<RawVQASample> load_raw_samples(const std::filesystem::path& path)
{
    std::vector<RawVQASample> samples;
    for_each_jsonl_line(path, [&](const std::string& line) {
        auto const parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded())
            throw DatasetError("raw sample line is not JSON");
        samples.push_back(raw_sample_from_json(parsed));
    });
    return samples;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    static std::atomic<unsigned> counter { 0 };
    auto tmp = path;
    tmp += fmt::format(".tmp{}-{}", ::getpid(), counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DatasetError(fmt::format("cannot write {}", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out)
            throw DatasetError(fmt::format("short write to {}", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

void save_dataset(const std::filesystem::path& path, std::span<const EditSample> samples)
{
    std::string content;
    for (const auto& s: samples)
    {
        content += encode_sample(s);
        content += '\n';
    }
    write_file_atomic(path, content);
}

} // namespace tinyedit
