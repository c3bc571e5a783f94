#pragma once

// "ATN1" attention dump: magic `ATN1`, seven little-endian u32 fields
// [layer_index, H, S, span_start, span_len, R, C], then H*S little-endian
// IEEE-754 float32 weights, head-major.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ata/attention_probe.hpp"
#include "ata/error.hpp"

namespace ata::atn1 {

inline constexpr std::array<char, 4> kMagic{'A', 'T', 'N', '1'};
inline constexpr std::size_t kHeaderFields = 7;
inline constexpr std::size_t kHeaderBytes = kMagic.size() + kHeaderFields * 4;

namespace detail {

inline std::uint32_t read_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace detail

inline AttentionTensor decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size()) {
        throw FormatError("ATN1: file too short for magic, expected at least " +
                              std::to_string(kHeaderBytes) + " bytes, got " +
                              std::to_string(bytes.size()),
                          bytes.size());
    }
    for (std::size_t i = 0; i < kMagic.size(); ++i) {
        if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) {
            throw FormatError("ATN1: bad magic", i);
        }
    }
    if (bytes.size() < kHeaderBytes) {
        throw FormatError("ATN1: truncated header, expected " + std::to_string(kHeaderBytes) +
                              " bytes, got " + std::to_string(bytes.size()),
                          bytes.size());
    }
    std::array<std::uint32_t, kHeaderFields> f{};
    for (std::size_t i = 0; i < kHeaderFields; ++i) {
        f[i] = detail::read_u32_le(bytes.data() + kMagic.size() + 4 * i);
    }
    const auto [layer, heads, seq, span_start, span_len, rows, cols] = f;

    const std::uint64_t payload = std::uint64_t{heads} * seq * 4;
    const std::uint64_t expected = kHeaderBytes + payload;
    if (bytes.size() != expected) {
        throw FormatError("ATN1: length mismatch, expected " + std::to_string(expected) +
                              " bytes, got " + std::to_string(bytes.size()),
                          std::min<std::uint64_t>(bytes.size(), expected));
    }

    std::vector<double> weights(static_cast<std::size_t>(heads) * seq);
    const std::uint8_t* p = bytes.data() + kHeaderBytes;
    for (std::size_t k = 0; k < weights.size(); ++k, p += 4) {
        weights[k] = static_cast<double>(std::bit_cast<float>(detail::read_u32_le(p)));
    }
    return AttentionTensor(layer, heads, seq, std::move(weights), ImageSpan{span_start, span_len},
                           GridShape{rows, cols});
}

inline std::vector<std::uint8_t> encode(const AttentionTensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + t.weights().size() * 4);
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    const auto span = t.image_span();
    const auto grid = t.grid();
    for (std::size_t v : {t.layer_index(), t.num_heads(), t.seq_len(), span.start, span.len,
                          grid.rows, grid.cols}) {
        detail::write_u32_le(out, static_cast<std::uint32_t>(v));
    }
    for (double w : t.weights()) {
        detail::write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
    }
    return out;
}

inline AttentionTensor read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open attention dump " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode(bytes);
}

inline void write_file(const std::filesystem::path& path, const AttentionTensor& t) {
    const auto bytes = encode(t);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write attention dump " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ata::atn1
