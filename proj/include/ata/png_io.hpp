#pragma once

// Lossless PNG read/write through libpng's simplified API. Consumers link
// against libpng (PNG::PNG in CMake).

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ata/attn_mask.hpp"
#include "ata/compositor.hpp"
#include "ata/error.hpp"

namespace ata::png {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;
};

namespace detail {

template <class Out>
Out read_as(const std::filesystem::path& path, png_uint_32 format) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw Error("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = format;
    Out out;
    out.width = image.width;
    out.height = image.height;
    out.data.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
        png_image_free(&image);
        throw Error("cannot decode PNG " + path.string() + ": " + image.message);
    }
    if (out.width == 0 || out.height == 0) throw StructuralError("PNG has zero size: " + path.string());
    return out;
}

inline void write_raw(const std::filesystem::path& path, std::size_t w, std::size_t h, png_uint_32 format,
                      const std::uint8_t* data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
        throw Error("cannot write PNG " + path.string() + ": " + image.message);
    }
}

}  // namespace detail

/// Any PNG, converted to 8-bit RGB.
inline Image read_rgb(const std::filesystem::path& path) { return detail::read_as<Image>(path, PNG_FORMAT_RGB); }

inline GrayImage read_gray(const std::filesystem::path& path) {
    return detail::read_as<GrayImage>(path, PNG_FORMAT_GRAY);
}

inline void write_rgb(const std::filesystem::path& path, const Image& img) {
    detail::write_raw(path, img.width, img.height, PNG_FORMAT_RGB, img.data.data());
}

inline void write_gray(const std::filesystem::path& path, const GrayImage& img) {
    detail::write_raw(path, img.width, img.height, PNG_FORMAT_GRAY, img.data.data());
}

/// Mask as an 8-bit single-channel image, value = round(255 * m).
inline void write_mask(const std::filesystem::path& path, const PixelMask& mask) {
    write_gray(path, {mask.width, mask.height, to_gray8(mask)});
}

inline PixelMask read_mask(const std::filesystem::path& path) {
    const auto g = read_gray(path);
    return from_gray8(g.width, g.height, g.data);
}

}  // namespace ata::png
