#pragma once

// Attention-guided mask: z-score + sigmoid normalization of a patch attention
// map, then bilinear upsampling to pixel resolution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ata/attention_probe.hpp"
#include "ata/error.hpp"

namespace ata {

/// Width x height grid of blend weights in [0, 1], row-major.
struct PixelMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    PixelMask() = default;
    PixelMask(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), values(w * h, fill) {
        if (w == 0 || h == 0) throw StructuralError("pixel mask dimensions must be positive");
    }

    double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Below this population standard deviation every output is 0.5.
inline constexpr double kDegenerateSigma = 1e-12;

/// sigmoid((psi - mean) / stddev) with the population standard deviation
/// taken over all patches.
inline PatchAttentionMap normalize_sigmoid(const PatchAttentionMap& psi) {
    const std::size_t n = psi.values.size();
    if (n == 0 || psi.grid.cells() != n) throw StructuralError("attention map is empty or misshapen");

    // Moments of the values shifted by the first entry: a constant grid then
    // has exactly zero spread whatever its magnitude.
    const double shift = psi.values.front();
    double mean = 0.0;
    for (double v : psi.values) mean += v - shift;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : psi.values) var += (v - shift - mean) * (v - shift - mean);
    const double sigma = std::sqrt(var / static_cast<double>(n));

    PatchAttentionMap out{psi.grid, std::vector<double>(n, 0.5), psi.layer_index};
    if (sigma < kDegenerateSigma) return out;
    for (std::size_t k = 0; k < n; ++k) out.values[k] = sigmoid((psi.values[k] - shift - mean) / sigma);
    return out;
}

namespace detail {

struct LerpTap {
    std::size_t lo;
    std::size_t hi;
    double frac;
};

// Pixel centers map to patch centers (align-corners = false), clamped at the
// borders.
inline std::vector<LerpTap> lerp_taps(std::size_t out_size, std::size_t in_size) {
    std::vector<LerpTap> taps(out_size);
    const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
    for (std::size_t o = 0; o < out_size; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
        const auto lo = static_cast<std::size_t>(src);
        const std::size_t hi = std::min(lo + 1, in_size - 1);
        taps[o] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace detail

inline PixelMask upsample(const PatchAttentionMap& mask, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) throw StructuralError("upsample target must be non-empty");
    if (mask.values.empty() || mask.grid.cells() != mask.values.size()) {
        throw StructuralError("patch mask is empty or misshapen");
    }
    for (double v : mask.values) {
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("patch mask value outside [0, 1]");
    }

    const auto xs = detail::lerp_taps(width, mask.grid.cols);
    const auto ys = detail::lerp_taps(height, mask.grid.rows);
    PixelMask out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const auto& ty = ys[y];
        for (std::size_t x = 0; x < width; ++x) {
            const auto& tx = xs[x];
            const double top = mask.at(ty.lo, tx.lo) * (1.0 - tx.frac) + mask.at(ty.lo, tx.hi) * tx.frac;
            const double bottom = mask.at(ty.hi, tx.lo) * (1.0 - tx.frac) + mask.at(ty.hi, tx.hi) * tx.frac;
            out.at(x, y) = std::clamp(top * (1.0 - ty.frac) + bottom * ty.frac, 0.0, 1.0);
        }
    }
    return out;
}

/// Full attention-guided path: head mean, normalization, upsampling.
inline PixelMask attention_mask(const AttentionTensor& t, std::size_t width, std::size_t height) {
    return upsample(normalize_sigmoid(aggregate_heads(t)), width, height);
}

/// 8-bit quantization for inspection, value = round(255 * m).
inline std::vector<std::uint8_t> to_gray8(const PixelMask& mask) {
    std::vector<std::uint8_t> out(mask.values.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(mask.values[k], 0.0, 1.0)));
    }
    return out;
}

inline PixelMask from_gray8(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& gray) {
    if (gray.size() != width * height) throw StructuralError("gray mask size mismatch");
    PixelMask out(width, height);
    for (std::size_t k = 0; k < gray.size(); ++k) out.values[k] = gray[k] / 255.0;
    return out;
}

}  // namespace ata
