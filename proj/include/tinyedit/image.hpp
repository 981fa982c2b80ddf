// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/sample.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace tinyedit
{

struct Rgb
{
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite { 255, 255, 255 };
inline constexpr Rgb kBlack { 0, 0, 0 };
inline constexpr Rgb kRed { 255, 0, 0 };

/// 8-bit RGB raster, row-major, channels interleaved.
class Image
{
  public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int width, int height, Rgb fill = kBlack);

    [[nodiscard]] int width() const { return _width; }
    [[nodiscard]] int height() const { return _height; }
    [[nodiscard]] ImageDims dims() const { return { _width, _height }; }
    [[nodiscard]] bool empty() const { return _width == 0 || _height == 0; }

    [[nodiscard]] std::span<std::uint8_t> pixels() { return _data; }
    [[nodiscard]] std::span<const std::uint8_t> pixels() const { return _data; }

    [[nodiscard]] std::uint8_t* row(int y) { return _data.data() + offset(0, y); }
    [[nodiscard]] const std::uint8_t* row(int y) const { return _data.data() + offset(0, y); }

    [[nodiscard]] Rgb at(int x, int y) const
    {
        const auto* p = _data.data() + offset(x, y);
        return { p[0], p[1], p[2] };
    }
    void set(int x, int y, Rgb value)
    {
        auto* p = _data.data() + offset(x, y);
        p[0] = value.r;
        p[1] = value.g;
        p[2] = value.b;
    }

    friend bool operator==(const Image&, const Image&) = default;

  private:
    [[nodiscard]] std::size_t offset(int x, int y) const
    {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(_width) + static_cast<std::size_t>(x))
               * kChannels;
    }

    int _width = 0;
    int _height = 0;
    std::vector<std::uint8_t> _data;
};

class ImageIOError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Decodes PNG or JPEG (detected from the magic bytes). Alpha is composited onto white.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

/// Reads only the header of a PNG or JPEG file.
ImageDims read_image_dims(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);

} // namespace tinyedit
