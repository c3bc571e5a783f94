#pragma once

// Attention probe: per-head attention rows of the last query token and their
// aggregation into a patch-grid attention map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ata/error.hpp"

namespace ata {

struct ImageSpan {
    std::size_t start = 0;
    std::size_t len = 0;
};

struct GridShape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t cells() const noexcept { return rows * cols; }
    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Attention distribution of the last query token over the full token
/// sequence, one row per head, stored head-major.
///
/// Construction validates the invariants: non-negative weights, each row
/// summing to one within 1e-5, and an image span that fits the sequence and
/// matches the patch grid.
class AttentionTensor {
public:
    static constexpr double kRowSumTolerance = 1e-5;

    AttentionTensor(std::size_t layer_index, std::size_t num_heads, std::size_t seq_len,
                    std::vector<double> weights, ImageSpan image_span, GridShape grid)
        : layer_index_(layer_index),
          num_heads_(num_heads),
          seq_len_(seq_len),
          weights_(std::move(weights)),
          span_(image_span),
          grid_(grid) {
        validate();
    }

    std::size_t layer_index() const noexcept { return layer_index_; }
    std::size_t num_heads() const noexcept { return num_heads_; }
    std::size_t seq_len() const noexcept { return seq_len_; }
    ImageSpan image_span() const noexcept { return span_; }
    GridShape grid() const noexcept { return grid_; }
    std::span<const double> weights() const noexcept { return weights_; }

    std::span<const double> row(std::size_t head) const {
        if (head >= num_heads_) throw StructuralError("head index out of range");
        return std::span<const double>(weights_).subspan(head * seq_len_, seq_len_);
    }

private:
    void validate() const {
        if (num_heads_ == 0) throw StructuralError("attention tensor needs at least one head");
        if (seq_len_ == 0) throw StructuralError("attention tensor needs a non-empty sequence");
        if (weights_.size() != num_heads_ * seq_len_) {
            throw StructuralError("attention weights hold " + std::to_string(weights_.size()) +
                                  " values, expected H*S = " +
                                  std::to_string(num_heads_ * seq_len_));
        }
        if (span_.len == 0 || span_.start >= seq_len_ || span_.len > seq_len_ - span_.start) {
            throw StructuralError("image span [" + std::to_string(span_.start) + ", +" +
                                  std::to_string(span_.len) + ") does not fit sequence of length " +
                                  std::to_string(seq_len_));
        }
        if (grid_.cells() != span_.len) {
            throw StructuralError("patch grid " + std::to_string(grid_.rows) + "x" +
                                  std::to_string(grid_.cols) + " does not match image span length " +
                                  std::to_string(span_.len));
        }
        for (std::size_t h = 0; h < num_heads_; ++h) {
            double sum = 0.0;
            for (double w : row(h)) {
                if (!std::isfinite(w)) throw NumericError("non-finite attention weight");
                if (w < 0.0) throw StructuralError("negative attention weight");
                sum += w;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance) {
                throw StructuralError("attention row of head " + std::to_string(h) +
                                      " sums to " + std::to_string(sum) + ", not 1");
            }
        }
    }

    std::size_t layer_index_;
    std::size_t num_heads_;
    std::size_t seq_len_;
    std::vector<double> weights_;
    ImageSpan span_;
    GridShape grid_;
};

/// Row-major R x C grid of non-negative attention values.
struct PatchAttentionMap {
    GridShape grid;
    std::vector<double> values;
    std::size_t layer_index = 0;

    double at(std::size_t i, std::size_t j) const { return values[i * grid.cols + j]; }
};

/// Mean over heads of the image-token slice of each row. Patch (i, j) reads
/// token `span.start + i * cols + j`.
inline PatchAttentionMap aggregate_heads(const AttentionTensor& t) {
    const auto span = t.image_span();
    PatchAttentionMap out{t.grid(), std::vector<double>(span.len, 0.0), t.layer_index()};
    for (std::size_t h = 0; h < t.num_heads(); ++h) {
        const auto image_tokens = t.row(h).subspan(span.start, span.len);
        for (std::size_t k = 0; k < span.len; ++k) out.values[k] += image_tokens[k];
    }
    const double inv_heads = 1.0 / static_cast<double>(t.num_heads());
    for (double& v : out.values) v *= inv_heads;
    return out;
}

/// Numerically stable softmax of q . K^T / sqrt(d) for a single query.
/// `keys` is S x d, row-major.
inline std::vector<double> softmax_attention_row(std::span<const double> query,
                                                 std::span<const double> keys, std::size_t dim) {
    if (dim == 0) throw ContractError("head dimension must be >= 1");
    if (query.size() != dim) throw StructuralError("query length differs from head dimension");
    if (keys.empty() || keys.size() % dim != 0) {
        throw StructuralError("key matrix size is not a positive multiple of the head dimension");
    }
    for (double q : query)
        if (!std::isfinite(q)) throw NumericError("non-finite query entry");
    for (double k : keys)
        if (!std::isfinite(k)) throw NumericError("non-finite key entry");

    const std::size_t seq = keys.size() / dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<double> row(seq);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < seq; ++s) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dim; ++c) dot += query[c] * keys[s * dim + c];
        row[s] = dot * scale;
        if (!std::isfinite(row[s])) throw NumericError("attention logit overflowed");
        max_logit = std::max(max_logit, row[s]);
    }
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - max_logit);
        sum += v;
    }
    for (double& v : row) v /= sum;
    return row;
}

/// Scaled dot-product attention of one query per head against that head's
/// keys. `queries[h]` has length d; `keys[h]` is S x d row-major.
inline AttentionTensor toy_attention(std::span<const std::vector<double>> queries,
                                     std::span<const std::vector<double>> keys, std::size_t dim,
                                     std::size_t layer_index, ImageSpan image_span,
                                     GridShape grid) {
    if (queries.empty()) throw StructuralError("toy attention needs at least one head");
    if (queries.size() != keys.size()) {
        throw StructuralError("query and key head counts differ");
    }
    if (dim == 0) throw ContractError("head dimension must be >= 1");
    const std::size_t seq = keys.front().size() / dim;
    std::vector<double> weights;
    weights.reserve(queries.size() * seq);
    for (std::size_t h = 0; h < queries.size(); ++h) {
        if (keys[h].size() != seq * dim) throw StructuralError("heads disagree on sequence length");
        auto row = softmax_attention_row(queries[h], keys[h], dim);
        weights.insert(weights.end(), row.begin(), row.end());
    }
    return AttentionTensor(layer_index, queries.size(), seq, std::move(weights), image_span, grid);
}

}  // namespace ata
