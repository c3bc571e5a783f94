#pragma once

// Observation compositing: mask blending against a neutral background, the
// Gaussian-blur ablation operator, and inspection overlays.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ata/attn_mask.hpp"
#include "ata/error.hpp"

namespace ata {

/// 8-bit RGB raster, interleaved, row-major.
struct Image {
    static constexpr std::size_t kChannels = 3;

    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), data(w * h * kChannels, fill) {
        if (w == 0 || h == 0) throw StructuralError("image dimensions must be positive");
    }

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * kChannels + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
        return data[(y * width + x) * kChannels + c];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

inline constexpr std::uint8_t kDefaultBackground = 127;

inline std::uint8_t round_to_u8(double v) {
    // lround rounds halves away from zero.
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

/// out = round(m * img + (1 - m) * bg), the same mask on every channel.
inline Image blend(const Image& img, const PixelMask& mask, std::uint8_t bg = kDefaultBackground) {
    if (img.width != mask.width || img.height != mask.height) {
        throw StructuralError("mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                              " does not match image " + std::to_string(img.width) + "x" +
                              std::to_string(img.height));
    }
    Image out = img;
    const double b = bg;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        const double m = mask.values[p];
        if (!(m >= 0.0 && m <= 1.0)) throw ContractError("mask value outside [0, 1]");
        for (std::size_t c = 0; c < Image::kChannels; ++c) {
            auto& px = out.data[p * Image::kChannels + c];
            px = round_to_u8(m * px + (1.0 - m) * b);
        }
    }
    return out;
}

inline constexpr std::size_t kBlurKernelSize = 9;
inline constexpr double kDefaultBlurSigma = 2.0;

/// Normalized 1-D Gaussian taps, centered, `size` odd.
inline std::vector<double> gaussian_kernel_1d(std::size_t size, double sigma) {
    if (size == 0 || size % 2 == 0) throw ContractError("blur kernel size must be odd and positive");
    if (!(sigma > 0.0)) throw ContractError("blur sigma must be positive");
    const auto radius = static_cast<long>(size / 2);
    std::vector<double> k(size);
    double sum = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

/// Separable Gaussian blur with edge-clamp padding. Both passes run in double
/// precision; rounding happens once at the end.
inline Image gaussian_blur(const Image& img, std::size_t size = kBlurKernelSize, double sigma = kDefaultBlurSigma) {
    const auto k = gaussian_kernel_1d(size, sigma);
    const auto radius = static_cast<long>(size / 2);
    const auto w = static_cast<long>(img.width);
    const auto h = static_cast<long>(img.height);
    constexpr std::size_t nc = Image::kChannels;

    std::vector<double> horiz(img.data.size());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < nc; ++c) {
                double acc = 0.0;
                for (long t = -radius; t <= radius; ++t) {
                    const long sx = std::clamp(x + t, 0L, w - 1);
                    acc += k[static_cast<std::size_t>(t + radius)] * img.data[(y * w + sx) * nc + c];
                }
                horiz[(y * w + x) * nc + c] = acc;
            }
        }
    }

    Image out(img.width, img.height);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < nc; ++c) {
                double acc = 0.0;
                for (long t = -radius; t <= radius; ++t) {
                    const long sy = std::clamp(y + t, 0L, h - 1);
                    acc += k[static_cast<std::size_t>(t + radius)] * horiz[(sy * w + x) * nc + c];
                }
                out.data[(y * w + x) * nc + c] = round_to_u8(acc);
            }
        }
    }
    return out;
}

// Inspection only: semi-transparent red over pixels with a positive mask.
inline Image red_overlay(const Image& img, const PixelMask& mask, double opacity = 0.5) {
    if (img.width != mask.width || img.height != mask.height) throw StructuralError("overlay size mismatch");
    Image out = img;
    constexpr double red[3] = {255.0, 0.0, 0.0};
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (mask.values[p] <= 0.0) continue;
        for (std::size_t c = 0; c < Image::kChannels; ++c) {
            auto& px = out.data[p * Image::kChannels + c];
            px = round_to_u8((1.0 - opacity) * px + opacity * red[c]);
        }
    }
    return out;
}

// Inspection only: blue-to-red heat colormap mixed over the image.
inline Image heatmap_overlay(const Image& img, const PixelMask& mask, double opacity = 0.5) {
    if (img.width != mask.width || img.height != mask.height) throw StructuralError("overlay size mismatch");
    Image out = img;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        const double m = std::clamp(mask.values[p], 0.0, 1.0);
        const double heat[3] = {255.0 * std::clamp(2.0 * m - 0.5, 0.0, 1.0),
                                255.0 * (1.0 - std::abs(2.0 * m - 1.0)),
                                255.0 * std::clamp(1.5 - 2.0 * m, 0.0, 1.0)};
        for (std::size_t c = 0; c < Image::kChannels; ++c) {
            auto& px = out.data[p * Image::kChannels + c];
            px = round_to_u8((1.0 - opacity) * px + opacity * heat[c]);
        }
    }
    return out;
}

}  // namespace ata
