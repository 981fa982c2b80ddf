// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/image.hpp"
#include "tinyedit/sample.hpp"

#include <span>
#include <vector>

namespace tinyedit
{

struct ExpansionParams
{
    double lambda_max = 6.0;
    double lambda_min = 0.3;
    double s_min = 32.0;
    double s_max = 256.0;

    /// Throws std::invalid_argument when the ordering constraints fail.
    void validate() const;
};

struct DiffParams
{
    int intensity_threshold = 12;
    int min_region_area = 16;
    int merge_distance = 8;
    int max_regions = 5;

    void validate() const;
};

inline constexpr int kDiffContextPad = 4;
inline constexpr int kSeparatorWidth = 4;

struct DiffRegion
{
    BBox bbox;
    int changed_pixel_count = 0;
    Image composite;
};

/// Context growth factor for a target whose shorter side is s pixels.
double expansion_ratio(double s, const ExpansionParams& params = {});

/// Inflates the box to dim*(1+lambda) per side about its center, rounds
/// outward, clamps to the image.
BBox expand_bbox(const BBox& box, ImageDims dims, const ExpansionParams& params = {});

Image crop(const Image& image, const BBox& box);
Image mask_white(const Image& image, std::span<const BBox> boxes);

/// Resamples patch to the box size when needed and writes it into a copy of canvas.
Image paste_back(const Image& patch, const Image& canvas, const BBox& box);

/// Pixel count of the union of boxes (overlaps counted once).
std::int64_t union_area(std::span<const BBox> boxes);
double union_area_ratio(std::span<const BBox> boxes, ImageDims dims);

/// Grows a box by pad on every side, clamped to dims.
BBox pad_box(const BBox& box, int pad, ImageDims dims);

std::vector<DiffRegion> localize_diff_regions(const Image& a, const Image& b, const DiffParams& params = {});

/// Region boxes only, without building composites.
std::vector<BBox> diff_region_boxes(const Image& a, const Image& b, const DiffParams& params = {});

Image compose_side_by_side(const Image& left, const Image& right);

/// Smallest integer k in [1, 4] with min_side*k >= target, else 4.
int upscale_factor(ImageDims dims, int target_min_dim);
Image upscale_fallback(const Image& image, int target_min_dim);

Image resize_bicubic(const Image& image, int width, int height);

/// 3 px red rectangle outline drawn inside the box, clipped to the image.
void draw_box_outline(Image& image, const BBox& box, Rgb color = kRed, int thickness = 3);

} // namespace tinyedit
