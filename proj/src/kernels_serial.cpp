// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace tinyedit::kernels
{

namespace detail
{

namespace
{

double keys_weight(double x)
{
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

} // namespace

std::vector<Taps> bicubic_taps(int src_size, int dst_size)
{
    std::vector<Taps> taps(static_cast<std::size_t>(dst_size));
    auto const scale = static_cast<double>(src_size) / dst_size;
    for (int i = 0; i < dst_size; ++i)
    {
        auto const center = (i + 0.5) * scale - 0.5;
        auto const base = static_cast<int>(std::floor(center));
        auto& t = taps[static_cast<std::size_t>(i)];
        t.first = base - 1;
        for (int k = 0; k < 4; ++k)
            t.w[k] = keys_weight(center - (base - 1 + k));
    }
    return taps;
}

std::uint8_t clamp_channel(double value)
{
    return static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
}

} // namespace detail

namespace serial
{

std::vector<std::uint8_t> diff_mask(const Image& a, const Image& b, int threshold)
{
    if (a.dims() != b.dims())
        throw std::invalid_argument("diff_mask: image sizes differ");
    auto const pa = a.pixels();
    auto const pb = b.pixels();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(a.dims().area()), 0);
    for (std::size_t i = 0; i < mask.size(); ++i)
    {
        int delta = 0;
        for (int c = 0; c < Image::kChannels; ++c)
            delta = std::max(delta, std::abs(int { pa[i * 3 + c] } - int { pb[i * 3 + c] }));
        mask[i] = delta > threshold ? 1 : 0;
    }
    return mask;
}

Image resize_bicubic(const Image& src, int width, int height)
{
    if (src.empty() || width <= 0 || height <= 0)
        throw std::invalid_argument("resize_bicubic: empty source or target");
    auto const xt = detail::bicubic_taps(src.width(), width);
    auto const yt = detail::bicubic_taps(src.height(), height);

    // Horizontal pass into doubles, then vertical pass with rounding.
    std::vector<double> tmp(static_cast<std::size_t>(width) * src.height() * 3);
    for (int y = 0; y < src.height(); ++y)
    {
        const auto* row = src.row(y);
        for (int x = 0; x < width; ++x)
        {
            auto const& t = xt[static_cast<std::size_t>(x)];
            for (int c = 0; c < 3; ++c)
            {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                {
                    auto const sx = std::clamp(t.first + k, 0, src.width() - 1);
                    acc += t.w[k] * row[sx * 3 + c];
                }
                tmp[(static_cast<std::size_t>(y) * width + x) * 3 + c] = acc;
            }
        }
    }

    Image out(width, height);
    for (int y = 0; y < height; ++y)
    {
        auto const& t = yt[static_cast<std::size_t>(y)];
        auto* row = out.row(y);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
            {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                {
                    auto const sy = std::clamp(t.first + k, 0, src.height() - 1);
                    acc += t.w[k] * tmp[(static_cast<std::size_t>(sy) * width + x) * 3 + c];
                }
                row[x * 3 + c] = detail::clamp_channel(acc);
            }
    }
    return out;
}

void fill_boxes_white(Image& image, std::span<const BBox> boxes)
{
    for (const auto& box: boxes)
        for (int y = box.y1; y < box.y2; ++y)
        {
            auto* row = image.row(y);
            std::fill(row + box.x1 * 3, row + box.x2 * 3, std::uint8_t { 255 });
        }
}

} // namespace serial

} // namespace tinyedit::kernels
