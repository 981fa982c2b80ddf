// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/image.hpp"

#include <fmt/format.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace tinyedit
{

Image::Image(int width, int height, Rgb fill)
    : _width(width), _height(height)
{
    if (width < 0 || height < 0)
        throw std::invalid_argument(fmt::format("negative image size {}x{}", width, height));
    _data.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels);
    for (std::size_t i = 0; i < _data.size(); i += kChannels)
    {
        _data[i] = fill.r;
        _data[i + 1] = fill.g;
        _data[i + 2] = fill.b;
    }
}

namespace
{

constexpr std::uint8_t kPngMagic[] = { 0x89, 'P', 'N', 'G' };
constexpr std::uint8_t kJpegMagic[] = { 0xFF, 0xD8 };

bool starts_with(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> magic)
{
    return bytes.size() >= magic.size() && std::equal(magic.begin(), magic.end(), bytes.begin());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ImageIOError(fmt::format("cannot open image {}", path.string()));
    return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

Image decode_png(std::span<const std::uint8_t> bytes)
{
    png_image png {};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw ImageIOError(fmt::format("png decode: {}", png.message));
    png.format = PNG_FORMAT_RGB;
    Image out(static_cast<int>(png.width), static_cast<int>(png.height));
    png_color white { 255, 255, 255 };
    if (!png_image_finish_read(&png, &white, out.pixels().data(), 0, nullptr))
    {
        auto const message = std::string(png.message);
        png_image_free(&png);
        throw ImageIOError(fmt::format("png decode: {}", message));
    }
    return out;
}

struct JpegErrorManager
{
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Kept free of non-trivial locals so longjmp never skips a destructor.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, bool header_only, std::vector<std::uint8_t>& data,
                     int& width, int& height, char* message)
{
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump))
    {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    width = static_cast<int>(cinfo.image_width);
    height = static_cast<int>(cinfo.image_height);
    if (!header_only)
    {
        cinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo);
        auto const stride = static_cast<std::size_t>(cinfo.output_width) * 3;
        while (cinfo.output_scanline < cinfo.output_height)
        {
            JSAMPROW row = data.data() + stride * cinfo.output_scanline;
            jpeg_read_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_decompress(&cinfo);
    }
    jpeg_destroy_decompress(&cinfo);
    return true;
}

Image decode_jpeg(std::span<const std::uint8_t> bytes)
{
    int width = 0;
    int height = 0;
    char message[JMSG_LENGTH_MAX] = {};
    std::vector<std::uint8_t> none;
    if (!decode_jpeg_raw(bytes, true, none, width, height, message))
        throw ImageIOError(fmt::format("jpeg decode: {}", message));
    Image out(width, height);
    std::vector<std::uint8_t> data(out.pixels().size());
    if (!decode_jpeg_raw(bytes, false, data, width, height, message))
        throw ImageIOError(fmt::format("jpeg decode: {}", message));
    std::ranges::copy(data, out.pixels().begin());
    return out;
}

} // namespace

Image decode_image(std::span<const std::uint8_t> bytes)
{
    if (starts_with(bytes, kPngMagic))
        return decode_png(bytes);
    if (starts_with(bytes, kJpegMagic))
        return decode_jpeg(bytes);
    throw ImageIOError("unrecognized image format (expected PNG or JPEG)");
}

Image read_image(const std::filesystem::path& path)
{
    auto const bytes = read_bytes(path);
    try
    {
        return decode_image(bytes);
    }
    catch (const ImageIOError& e)
    {
        throw ImageIOError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

ImageDims read_image_dims(const std::filesystem::path& path)
{
    auto const bytes = read_bytes(path);
    if (starts_with(bytes, kPngMagic))
    {
        png_image png {};
        png.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
            throw ImageIOError(fmt::format("{}: {}", path.string(), png.message));
        ImageDims dims { static_cast<int>(png.width), static_cast<int>(png.height) };
        png_image_free(&png);
        return dims;
    }
    if (starts_with(bytes, kJpegMagic))
    {
        ImageDims dims;
        char message[JMSG_LENGTH_MAX] = {};
        std::vector<std::uint8_t> none;
        if (!decode_jpeg_raw(bytes, true, none, dims.width, dims.height, message))
            throw ImageIOError(fmt::format("{}: {}", path.string(), message));
        return dims;
    }
    throw ImageIOError(fmt::format("{}: unrecognized image format", path.string()));
}

std::vector<std::uint8_t> encode_png(const Image& image)
{
    if (image.empty())
        throw ImageIOError("cannot encode an empty image");
    png_image png {};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = PNG_FORMAT_RGB;
    // Fast zlib settings: observation images are hashed on every tool turn.
    png.flags = PNG_IMAGE_FLAG_FAST;
    png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(png);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels().data(), 0, nullptr))
        throw ImageIOError(fmt::format("png encode: {}", png.message));
    out.resize(size);
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path)
{
    auto const bytes = encode_png(image);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

} // namespace tinyedit
