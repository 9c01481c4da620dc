#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "bitstack/matrix.hpp"

namespace bitstack {

/// Storage precision of the low-rank factors.
enum class Precision : std::uint8_t { Half = 0, Single = 1 };

constexpr unsigned factor_bits(Precision p) { return p == Precision::Half ? 16u : 32u; }

constexpr std::string_view precision_name(Precision p) {
    return p == Precision::Half ? "half" : "single";
}

Precision parse_precision(std::string_view name);

// IEEE 754 binary16 conversion. Rounds to nearest, ties to even, directly from
// double (no intermediate float rounding). Magnitudes beyond the largest finite
// half saturate to +-65504 so stored factors are always finite.
std::uint16_t to_half_bits(double x);
double from_half_bits(std::uint16_t bits);

inline double round_to_half(double x) { return from_half_bits(to_half_bits(x)); }

double round_to_precision(double x, Precision p);

/// Rounds every entry in place.
void round_to_precision(DenseMatrix& m, Precision p);

} // namespace bitstack
