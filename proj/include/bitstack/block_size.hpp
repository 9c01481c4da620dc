#pragma once

#include <cstdint>

#include "bitstack/precision.hpp"

namespace bitstack::loader {

/// Bits occupied by one residual block of an m x n weight with rank-k factors:
/// one sign bit per entry plus k*(m+n) factor entries. Padding is not counted.
constexpr std::uint64_t block_size_bits(std::uint64_t m, std::uint64_t n, std::uint64_t k,
                                        Precision precision = Precision::Half) {
    return m * n + factor_bits(precision) * k * (m + n);
}

/// Whole bytes needed to hold a block of the given bit size.
constexpr std::uint64_t block_size_bytes(std::uint64_t bits) { return (bits + 7) / 8; }

inline constexpr double kMiB = 1024.0 * 1024.0;

} // namespace bitstack::loader
