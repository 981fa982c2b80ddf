// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/geometry.hpp"

#include "tinyedit/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tinyedit
{

void ExpansionParams::validate() const
{
    if (!(lambda_max >= lambda_min && lambda_min >= 0.0))
        throw std::invalid_argument("expansion params: need lambda_max >= lambda_min >= 0");
    if (!(s_max > s_min && s_min > 0.0))
        throw std::invalid_argument("expansion params: need s_max > s_min > 0");
}

void DiffParams::validate() const
{
    if (intensity_threshold < 0 || min_region_area < 0 || merge_distance < 0)
        throw std::invalid_argument("diff params must be non-negative");
    if (max_regions < 1)
        throw std::invalid_argument("diff params: max_regions must be at least 1");
}

double expansion_ratio(double s, const ExpansionParams& params)
{
    if (!(s > 0.0))
        throw std::invalid_argument(fmt::format("expansion_ratio: size must be positive, got {}", s));
    if (s <= params.s_min)
        return params.lambda_max;
    if (s >= params.s_max)
        return params.lambda_min;
    auto const alpha = (s - params.s_min) / (params.s_max - params.s_min);
    return (1.0 - alpha) * params.lambda_max + alpha * params.lambda_min;
}

namespace
{

void require_within(const BBox& box, ImageDims dims, const char* what)
{
    if (!box.within(dims))
        throw std::invalid_argument(
            fmt::format("{}: box {} outside {}x{} image", what, to_string(box), dims.width, dims.height));
}

} // namespace

BBox expand_bbox(const BBox& box, ImageDims dims, const ExpansionParams& params)
{
    require_within(box, dims, "expand_bbox");
    auto const lambda = expansion_ratio(box.min_side(), params);
    auto const cx = (box.x1 + box.x2) / 2.0;
    auto const cy = (box.y1 + box.y2) / 2.0;
    auto const half_w = box.width() * (1.0 + lambda) / 2.0;
    auto const half_h = box.height() * (1.0 + lambda) / 2.0;
    BBox out {
        static_cast<int>(std::floor(cx - half_w)),
        static_cast<int>(std::floor(cy - half_h)),
        static_cast<int>(std::ceil(cx + half_w)),
        static_cast<int>(std::ceil(cy + half_h)),
    };
    out.x1 = std::clamp(std::min(out.x1, box.x1), 0, dims.width);
    out.y1 = std::clamp(std::min(out.y1, box.y1), 0, dims.height);
    out.x2 = std::clamp(std::max(out.x2, box.x2), 0, dims.width);
    out.y2 = std::clamp(std::max(out.y2, box.y2), 0, dims.height);
    return out;
}

Image crop(const Image& image, const BBox& box)
{
    require_within(box, image.dims(), "crop");
    Image out(box.width(), box.height());
    for (int y = 0; y < box.height(); ++y)
    {
        const auto* src = image.row(box.y1 + y) + box.x1 * 3;
        std::copy(src, src + box.width() * 3, out.row(y));
    }
    return out;
}

Image mask_white(const Image& image, std::span<const BBox> boxes)
{
    for (const auto& box: boxes)
        require_within(box, image.dims(), "mask_white");
    auto out = image;
    kernels::parallel::fill_boxes_white(out, boxes);
    return out;
}

Image resize_bicubic(const Image& image, int width, int height)
{
    if (image.width() == width && image.height() == height)
        return image;
    return kernels::parallel::resize_bicubic(image, width, height);
}

Image paste_back(const Image& patch, const Image& canvas, const BBox& box)
{
    require_within(box, canvas.dims(), "paste_back");
    if (patch.empty())
        throw std::invalid_argument("paste_back: empty patch");
    auto const fitted = resize_bicubic(patch, box.width(), box.height());
    auto out = canvas;
    for (int y = 0; y < box.height(); ++y)
    {
        const auto* src = fitted.row(y);
        std::copy(src, src + box.width() * 3, out.row(box.y1 + y) + box.x1 * 3);
    }
    return out;
}

std::int64_t union_area(std::span<const BBox> boxes)
{
    // Coordinate compression over x, then a coverage sweep per x slab.
    std::vector<int> xs;
    for (const auto& b: boxes)
        if (b.x2 > b.x1 && b.y2 > b.y1)
        {
            xs.push_back(b.x1);
            xs.push_back(b.x2);
        }
    std::ranges::sort(xs);
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    std::int64_t total = 0;
    std::vector<std::pair<int, int>> spans;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
    {
        spans.clear();
        for (const auto& b: boxes)
            if (b.x2 > b.x1 && b.y2 > b.y1 && b.x1 <= xs[i] && b.x2 >= xs[i + 1])
                spans.emplace_back(b.y1, b.y2);
        std::ranges::sort(spans);
        std::int64_t covered = 0;
        int cur_start = 0;
        int cur_end = 0;
        bool open = false;
        for (auto [s, e]: spans)
        {
            if (!open || s > cur_end)
            {
                if (open)
                    covered += cur_end - cur_start;
                cur_start = s;
                cur_end = e;
                open = true;
            }
            else
                cur_end = std::max(cur_end, e);
        }
        if (open)
            covered += cur_end - cur_start;
        total += covered * (xs[i + 1] - xs[i]);
    }
    return total;
}

double union_area_ratio(std::span<const BBox> boxes, ImageDims dims)
{
    if (dims.area() <= 0)
        throw std::invalid_argument("union_area_ratio: image has zero area");
    for (const auto& box: boxes)
        require_within(box, dims, "union_area_ratio");
    return static_cast<double>(union_area(boxes)) / static_cast<double>(dims.area());
}

BBox pad_box(const BBox& box, int pad, ImageDims dims)
{
    return {
        std::max(0, box.x1 - pad),
        std::max(0, box.y1 - pad),
        std::min(dims.width, box.x2 + pad),
        std::min(dims.height, box.y2 + pad),
    };
}

Image compose_side_by_side(const Image& left, const Image& right)
{
    auto const height = std::max(left.height(), right.height());
    Image out(left.width() + kSeparatorWidth + right.width(), height, kWhite);
    for (int y = 0; y < left.height(); ++y)
        std::copy(left.row(y), left.row(y) + left.width() * 3, out.row(y));
    for (int y = 0; y < right.height(); ++y)
        std::copy(right.row(y), right.row(y) + right.width() * 3,
                  out.row(y) + (left.width() + kSeparatorWidth) * 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < kSeparatorWidth; ++x)
            out.set(left.width() + x, y, kRed);
    return out;
}

int upscale_factor(ImageDims dims, int target_min_dim)
{
    auto const side = std::min(dims.width, dims.height);
    for (int k = 1; k < 4; ++k)
        if (static_cast<std::int64_t>(side) * k >= target_min_dim)
            return k;
    return 4;
}

Image upscale_fallback(const Image& image, int target_min_dim)
{
    if (target_min_dim < 1)
        throw std::invalid_argument("upscale_fallback: target must be at least 1");
    if (image.empty() || std::min(image.width(), image.height()) >= target_min_dim)
        return image;
    auto const k = upscale_factor(image.dims(), target_min_dim);
    return resize_bicubic(image, image.width() * k, image.height() * k);
}

void draw_box_outline(Image& image, const BBox& box, Rgb color, int thickness)
{
    auto const x1 = std::max(0, box.x1);
    auto const y1 = std::max(0, box.y1);
    auto const x2 = std::min(image.width(), box.x2);
    auto const y2 = std::min(image.height(), box.y2);
    for (int y = y1; y < y2; ++y)
        for (int x = x1; x < x2; ++x)
        {
            auto const edge = x < box.x1 + thickness || x >= box.x2 - thickness || y < box.y1 + thickness
                              || y >= box.y2 - thickness;
            if (edge)
                image.set(x, y, color);
        }
}

} // namespace tinyedit
