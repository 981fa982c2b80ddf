// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/geometry.hpp"
#include "tinyedit/kernels.hpp"

#include <algorithm>
#include <numeric>

namespace tinyedit
{

namespace
{

struct Component
{
    BBox box;
    int count = 0;
};

class DisjointSet
{
  public:
    explicit DisjointSet(std::size_t n): _parent(n) { std::iota(_parent.begin(), _parent.end(), 0); }

    std::size_t find(std::size_t x)
    {
        while (_parent[x] != x)
        {
            _parent[x] = _parent[_parent[x]];
            x = _parent[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b)
            _parent[std::max(a, b)] = std::min(a, b);
    }

  private:
    std::vector<std::size_t> _parent;
};

std::vector<Component> label_components(const std::vector<std::uint8_t>& mask, int width, int height)
{
    DisjointSet sets(mask.size());
    auto idx = [width](int x, int y) { return static_cast<std::size_t>(y) * width + x; };
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
        {
            if (!mask[idx(x, y)])
                continue;
            // Previously visited 8-neighbours: W, NW, N, NE.
            if (x > 0 && mask[idx(x - 1, y)])
                sets.unite(idx(x, y), idx(x - 1, y));
            if (y > 0)
            {
                for (int dx = -1; dx <= 1; ++dx)
                {
                    auto const nx = x + dx;
                    if (nx >= 0 && nx < width && mask[idx(nx, y - 1)])
                        sets.unite(idx(x, y), idx(nx, y - 1));
                }
            }
        }

    std::vector<int> slot(mask.size(), -1);
    std::vector<Component> components;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
        {
            if (!mask[idx(x, y)])
                continue;
            auto const root = sets.find(idx(x, y));
            if (slot[root] < 0)
            {
                slot[root] = static_cast<int>(components.size());
                components.push_back({ { x, y, x + 1, y + 1 }, 0 });
            }
            auto& c = components[static_cast<std::size_t>(slot[root])];
            c.box.x1 = std::min(c.box.x1, x);
            c.box.y1 = std::min(c.box.y1, y);
            c.box.x2 = std::max(c.box.x2, x + 1);
            c.box.y2 = std::max(c.box.y2, y + 1);
            ++c.count;
        }
    return components;
}

int box_gap(const BBox& a, const BBox& b)
{
    auto const gx = std::max(0, std::max(a.x1, b.x1) - std::min(a.x2, b.x2));
    auto const gy = std::max(0, std::max(a.y1, b.y1) - std::min(a.y2, b.y2));
    return std::max(gx, gy);
}

void merge_close(std::vector<Component>& components, int merge_distance)
{
    bool merged = true;
    while (merged)
    {
        merged = false;
        for (std::size_t i = 0; i < components.size() && !merged; ++i)
            for (std::size_t j = i + 1; j < components.size(); ++j)
            {
                if (box_gap(components[i].box, components[j].box) >= merge_distance)
                    continue;
                auto& into = components[i];
                auto const& from = components[j];
                into.box = { std::min(into.box.x1, from.box.x1), std::min(into.box.y1, from.box.y1),
                             std::max(into.box.x2, from.box.x2), std::max(into.box.y2, from.box.y2) };
                into.count += from.count;
                components.erase(components.begin() + static_cast<std::ptrdiff_t>(j));
                merged = true;
                break;
            }
    }
}

std::vector<Component> find_regions(const Image& a, const Image& b, const DiffParams& params)
{
    params.validate();
    auto const mask = kernels::parallel::diff_mask(a, b, params.intensity_threshold);
    auto components = label_components(mask, a.width(), a.height());
    merge_close(components, params.merge_distance);
    std::erase_if(components, [&](const Component& c) { return c.count < params.min_region_area; });
    std::ranges::sort(components, [](const Component& l, const Component& r) {
        if (l.count != r.count)
            return l.count > r.count;
        if (l.box.y1 != r.box.y1)
            return l.box.y1 < r.box.y1;
        return l.box.x1 < r.box.x1;
    });
    if (components.size() > static_cast<std::size_t>(params.max_regions))
        components.resize(static_cast<std::size_t>(params.max_regions));
    return components;
}

} // namespace

std::vector<BBox> diff_region_boxes(const Image& a, const Image& b, const DiffParams& params)
{
    auto const matched = resize_bicubic(b, a.width(), a.height());
    std::vector<BBox> boxes;
    for (const auto& c: find_regions(a, matched, params))
        boxes.push_back(c.box);
    return boxes;
}

std::vector<DiffRegion> localize_diff_regions(const Image& a, const Image& b, const DiffParams& params)
{
    if (a.empty() || b.empty())
        throw std::invalid_argument("localize_diff_regions: empty image");
    auto const matched = resize_bicubic(b, a.width(), a.height());
    std::vector<DiffRegion> regions;
    for (const auto& c: find_regions(a, matched, params))
    {
        auto const padded = pad_box(c.box, kDiffContextPad, a.dims());
        regions.push_back({ c.box, c.count, compose_side_by_side(crop(a, padded), crop(matched, padded)) });
    }
    return regions;
}

} // namespace tinyedit
