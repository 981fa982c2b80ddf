// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

// Pixel kernels in two builds: OpenMP-parallel (used by the library) and a
// plain serial reference. Both must produce byte-identical output.
namespace tinyedit::kernels
{

namespace parallel
{
/// 1 where max channel |a-b| > threshold, else 0. Same-size inputs.
std::vector<std::uint8_t> diff_mask(const Image& a, const Image& b, int threshold);
/// Keys bicubic (a = -0.5), half-pixel centers, edge clamp.
Image resize_bicubic(const Image& src, int width, int height);
/// Paints every box white in place. Boxes must lie within the image.
void fill_boxes_white(Image& image, std::span<const BBox> boxes);
} // namespace parallel

namespace serial
{
std::vector<std::uint8_t> diff_mask(const Image& a, const Image& b, int threshold);
Image resize_bicubic(const Image& src, int width, int height);
void fill_boxes_white(Image& image, std::span<const BBox> boxes);
} // namespace serial

namespace detail
{
/// Four Keys weights and the first source tap for one output coordinate.
struct Taps
{
    int first = 0;
    double w[4] {};
};
std::vector<Taps> bicubic_taps(int src_size, int dst_size);
std::uint8_t clamp_channel(double value);
} // namespace detail

} // namespace tinyedit::kernels
