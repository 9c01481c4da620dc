#include "bitstack/precision.hpp"

#include <cmath>

namespace bitstack {

Precision parse_precision(std::string_view name) {
    if (name == "half") return Precision::Half;
    if (name == "single") return Precision::Single;
    throw Error(ErrorCode::BadConfig, "unknown precision '" + std::string(name) + "'");
}

std::uint16_t to_half_bits(double x) {
    if (std::isnan(x)) throw Error(ErrorCode::NonFinite, "cannot round NaN to half");
    const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
    const double a = std::abs(x);
    constexpr std::uint16_t max_finite = 0x7bffu;

    if (a >= 65504.0) return sign | max_finite;
    if (a < 0x1.0p-14) {
        // subnormal range, quantum 2^-24; 1024 quanta is the smallest normal
        const auto q = static_cast<std::uint16_t>(std::nearbyint(a * 0x1.0p24));
        return sign | q;
    }
    int e = 0;
    std::frexp(a, &e); // a = f * 2^e, f in [0.5, 1)
    int exponent = e - 1;
    double q = std::nearbyint(std::ldexp(a, 10 - exponent)); // in [1024, 2048]
    if (q >= 2048.0) {
        q = 1024.0;
        ++exponent;
    }
    if (exponent > 15) return sign | max_finite;
    return static_cast<std::uint16_t>(sign | ((exponent + 15) << 10) |
                                      (static_cast<unsigned>(q) - 1024u));
}

double from_half_bits(std::uint16_t bits) {
    const bool negative = bits & 0x8000u;
    const unsigned exponent = (bits >> 10) & 0x1fu;
    const unsigned mantissa = bits & 0x3ffu;
    double value;
    if (exponent == 0) {
        value = std::ldexp(static_cast<double>(mantissa), -24);
    } else if (exponent == 31) {
        value = mantissa == 0 ? HUGE_VAL : std::nan("");
    } else {
        value = std::ldexp(static_cast<double>(mantissa + 1024u), static_cast<int>(exponent) - 25);
    }
    return negative ? -value : value;
}

double round_to_precision(double x, Precision p) {
    if (p == Precision::Half) return round_to_half(x);
    if (std::isnan(x)) throw Error(ErrorCode::NonFinite, "cannot round NaN to single");
    constexpr double max_single = 3.4028234663852886e38;
    if (std::abs(x) >= max_single) return std::copysign(max_single, x);
    return static_cast<double>(static_cast<float>(x));
}

void round_to_precision(DenseMatrix& m, Precision p) {
    for (double& v : m.data()) v = round_to_precision(v, p);
}

} // namespace bitstack
