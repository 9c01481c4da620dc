#include <doctest.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <vector>

#include "bitstack/block_size.hpp"
#include "bitstack/precision.hpp"
#include "bitstack/rng.hpp"

using namespace bitstack;

namespace {

struct HalfValue {
    double value;
    std::uint16_t bits;
};

// Every nonnegative finite half, ascending, decoded by hand.
std::vector<HalfValue> all_nonnegative_halves() {
    std::vector<HalfValue> out;
    for (unsigned bits = 0; bits < 0x7c00u; ++bits) {
        const unsigned e = bits >> 10, f = bits & 0x3ffu;
        const double v = e == 0 ? f * std::pow(2.0, -24) : (1.0 + f / 1024.0) * std::pow(2.0, int(e) - 15);
        out.push_back({v, static_cast<std::uint16_t>(bits)});
    }
    return out;
}

// Round to nearest, ties to the even bit pattern, saturating at the largest finite half.
std::uint16_t nearest_half(const std::vector<HalfValue>& table, double x) {
    const double a = std::abs(x);
    const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
    auto hi = std::lower_bound(table.begin(), table.end(), a, [](const HalfValue& h, double v) { return h.value < v; });
    if (hi == table.end()) return sign | table.back().bits;
    if (hi->value == a || hi == table.begin()) return sign | hi->bits;
    auto lo = hi - 1;
    const double dlo = a - lo->value, dhi = hi->value - a;
    if (dlo < dhi) return sign | lo->bits;
    if (dhi < dlo) return sign | hi->bits;
    return sign | ((lo->bits & 1u) == 0 ? lo->bits : hi->bits);
}

} // namespace

TEST_CASE("every finite half survives a round trip") {
    for (unsigned bits = 0; bits < 0x10000u; ++bits) {
        if ((bits & 0x7c00u) == 0x7c00u) continue;
        const auto h = static_cast<std::uint16_t>(bits);
        const double v = from_half_bits(h);
        if (v == 0.0) {
            CHECK((to_half_bits(v) & 0x7fffu) == 0);
            continue;
        }
        REQUIRE(to_half_bits(v) == h);
    }
}

TEST_CASE("half rounding matches a nearest-value search") {
    const auto table = all_nonnegative_halves();
    Rng rng(99);
    for (int i = 0; i < 200000; ++i) {
        const double x = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(44)) - 28);
        REQUIRE(to_half_bits(x) == nearest_half(table, x));
    }
    // exact midpoints between neighbours exercise ties-to-even
    for (std::size_t i = 0; i + 1 < table.size(); i += 7) {
        const double mid = 0.5 * (table[i].value + table[i + 1].value);
        REQUIRE(to_half_bits(mid) == nearest_half(table, mid));
        REQUIRE(to_half_bits(-mid) == nearest_half(table, -mid));
    }
}

TEST_CASE("half rounding goes straight from double") {
    // 1 + 2^-11 + 2^-40 sits just above a tie; a detour through float would lose the tail.
    const double x = 1.0 + std::ldexp(1.0, -11) + std::ldexp(1.0, -40);
    CHECK(round_to_half(x) == 1.0 + std::ldexp(1.0, -10));
    CHECK(round_to_half(1.0 + std::ldexp(1.0, -11)) == 1.0);
}

TEST_CASE("overflow saturates and NaN is rejected") {
    CHECK(round_to_half(1e6) == 65504.0);
    CHECK(round_to_half(-1e300) == -65504.0);
    CHECK(round_to_half(65519.0) == 65504.0);
    CHECK(round_to_precision(1e300, Precision::Single) == static_cast<double>(FLT_MAX));
    CHECK_THROWS_AS(to_half_bits(std::nan("")), Error);
    CHECK(round_to_precision(0.1, Precision::Single) == static_cast<double>(0.1f));
}

TEST_CASE("precision names") {
    CHECK(parse_precision("half") == Precision::Half);
    CHECK(parse_precision("single") == Precision::Single);
    CHECK_THROWS_AS(parse_precision("double"), Error);
    CHECK(factor_bits(Precision::Half) == 16);
    CHECK(factor_bits(Precision::Single) == 32);
}

TEST_CASE("block sizes of large projection shapes") {
    using loader::block_size_bits;
    CHECK(block_size_bits(4096, 4096, 16) == 18'874'368);
    CHECK(block_size_bits(4096, 1024, 16) == 5'505'024);
    CHECK(block_size_bits(4096, 11008, 16) == 48'955'392);
    CHECK(loader::block_size_bytes(block_size_bits(4096, 4096, 16)) == 2'359'296);
}

TEST_CASE("block size formula against a per-entry count") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const std::uint64_t m = 1 + rng.below(300), n = 1 + rng.below(300), k = 1 + rng.below(40);
        for (auto p : {Precision::Half, Precision::Single}) {
            std::uint64_t bits = 0;
            for (std::uint64_t i = 0; i < m * n; ++i) bits += 1;                    // signs
            for (std::uint64_t i = 0; i < (m + n) * k; ++i) bits += factor_bits(p); // factors
            CHECK(loader::block_size_bits(m, n, k, p) == bits);
            CHECK(loader::block_size_bytes(bits) * 8 >= bits);
            CHECK(loader::block_size_bytes(bits) * 8 < bits + 8);
        }
    }
}
