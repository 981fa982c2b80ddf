// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace tinyedit::kernels::parallel
{

std::vector<std::uint8_t> diff_mask(const Image& a, const Image& b, int threshold)
{
    if (a.dims() != b.dims())
        throw std::invalid_argument("diff_mask: image sizes differ");
    const auto* pa = a.pixels().data();
    const auto* pb = b.pixels().data();
    auto const n = static_cast<std::ptrdiff_t>(a.dims().area());
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
    auto* out = mask.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
    {
        auto const d0 = std::abs(int { pa[i * 3] } - int { pb[i * 3] });
        auto const d1 = std::abs(int { pa[i * 3 + 1] } - int { pb[i * 3 + 1] });
        auto const d2 = std::abs(int { pa[i * 3 + 2] } - int { pb[i * 3 + 2] });
        out[i] = std::max({ d0, d1, d2 }) > threshold ? 1 : 0;
    }
    return mask;
}

Image resize_bicubic(const Image& src, int width, int height)
{
    if (src.empty() || width <= 0 || height <= 0)
        throw std::invalid_argument("resize_bicubic: empty source or target");
    auto const xt = detail::bicubic_taps(src.width(), width);
    auto const yt = detail::bicubic_taps(src.height(), height);
    auto const src_w = src.width();
    auto const src_h = src.height();

    // Same accumulation order as the serial reference so results match bit for bit.
    std::vector<double> tmp(static_cast<std::size_t>(width) * src_h * 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < src_h; ++y)
    {
        const auto* row = src.row(y);
        for (int x = 0; x < width; ++x)
        {
            auto const& t = xt[static_cast<std::size_t>(x)];
            for (int c = 0; c < 3; ++c)
            {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += t.w[k] * row[std::clamp(t.first + k, 0, src_w - 1) * 3 + c];
                tmp[(static_cast<std::size_t>(y) * width + x) * 3 + c] = acc;
            }
        }
    }

    Image out(width, height);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y)
    {
        auto const& t = yt[static_cast<std::size_t>(y)];
        auto* row = out.row(y);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
            {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += t.w[k]
                           * tmp[(static_cast<std::size_t>(std::clamp(t.first + k, 0, src_h - 1)) * width + x) * 3 + c];
                row[x * 3 + c] = detail::clamp_channel(acc);
            }
    }
    return out;
}

void fill_boxes_white(Image& image, std::span<const BBox> boxes)
{
    auto const height = image.height();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y)
    {
        auto* row = image.row(y);
        for (const auto& box: boxes)
            if (y >= box.y1 && y < box.y2)
                std::fill(row + box.x1 * 3, row + box.x2 * 3, std::uint8_t { 255 });
    }
}

} // namespace tinyedit::kernels::parallel
