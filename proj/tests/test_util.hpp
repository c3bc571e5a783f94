#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ata/attention_probe.hpp"
#include "ata/compositor.hpp"

namespace ata::fixtures {

// Random attention tensor whose rows are proper distributions.
inline AttentionTensor random_tensor(std::mt19937_64& rng, std::size_t heads, std::size_t prefix, GridShape grid,
                                     std::size_t suffix, std::size_t layer = 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t seq = prefix + grid.cells() + suffix;
    std::vector<double> w(heads * seq);
    for (std::size_t h = 0; h < heads; ++h) {
        double sum = 0.0;
        for (std::size_t s = 0; s < seq; ++s) sum += w[h * seq + s] = u(rng);
        for (std::size_t s = 0; s < seq; ++s) w[h * seq + s] /= sum;
    }
    return AttentionTensor(layer, heads, seq, std::move(w), ImageSpan{prefix, grid.cells()}, grid);
}

inline Image random_image(std::mt19937_64& rng, std::size_t w, std::size_t h) {
    Image img(w, h);
    std::uniform_int_distribution<int> px(0, 255);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(px(rng));
    return img;
}

}  // namespace ata::fixtures
