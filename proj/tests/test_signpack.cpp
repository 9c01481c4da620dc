#include <doctest.h>

#include "bitstack/rng.hpp"
#include "bitstack/signpack.hpp"
#include "oracles.hpp"

using namespace bitstack;
using namespace bitstack::signpack;

namespace {

SignMatrix random_signs(Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<std::int8_t> s(rows * cols);
    for (auto& v : s) v = rng.below(2) ? 1 : -1;
    return {rows, cols, std::move(s)};
}

ErrorCode code_of(const PackedSignMatrix& p) {
    try {
        unpack(p);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode{};
}

} // namespace

TEST_CASE("sign split with the zero-is-positive convention") {
    const auto split = sign_split(DenseMatrix::from_rows({{-2, 0}, {3, -1}}));
    CHECK(split.signs == SignMatrix(2, 2, {-1, 1, 1, -1}));
    CHECK(split.magnitudes == DenseMatrix::from_rows({{2, 0}, {3, 1}}));
}

TEST_CASE("positive matrices split into +1 and themselves") {
    const auto w = DenseMatrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    const auto split = sign_split(w);
    for (auto s : split.signs.signs()) CHECK(s == 1);
    CHECK(split.magnitudes == w);
}

TEST_CASE("sign times magnitude is the input, bit for bit") {
    const auto w = oracle::random_gaussian(8, 8, 5);
    const auto split = sign_split(w);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(split.signs(i, j) * split.magnitudes(i, j) == w(i, j));
}

TEST_CASE("packing layout") {
    CHECK(pack(SignMatrix(2, 2, {1, 1, 1, 1})).bits == std::vector<std::uint8_t>{0x0F});
    CHECK(pack(SignMatrix(1, 3, {1, -1, 1})).bits == std::vector<std::uint8_t>{0x05});
    CHECK(unpack({2, 2, {0x0F}}) == SignMatrix(2, 2, {1, 1, 1, 1}));
    CHECK(unpack({2, 2, {0x00}}) == SignMatrix(2, 2, {-1, -1, -1, -1}));
    CHECK(pack(SignMatrix(3, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1})).bits == std::vector<std::uint8_t>{0xFF, 0x01});
}

TEST_CASE("unpack rejects malformed buffers") {
    CHECK(code_of({2, 2, {}}) == ErrorCode::MalformedBuffer);
    CHECK(code_of({2, 2, {0x0F, 0x00}}) == ErrorCode::MalformedBuffer);
    CHECK(code_of({2, 2, {0x1F}}) == ErrorCode::MalformedBuffer);
    CHECK(code_of({1, 3, {0x08}}) == ErrorCode::MalformedBuffer);
    CHECK(code_of({2, 4, {0xFF}}) == ErrorCode{});
}

TEST_CASE("pack and unpack are inverse") {
    Rng rng(9);
    const auto s = random_signs(rng, 8, 8);
    CHECK(unpack(pack(s)) == s);

    for (int t = 0; t < 1000; ++t) {
        const std::size_t rows = rng.below(20), cols = rng.below(20);
        const auto m = random_signs(rng, rows, cols);
        const auto p = pack(m);
        REQUIRE(unpack(p) == m);
        REQUIRE(pack(unpack(p)) == p);
    }
}

TEST_CASE("pack_signs_of agrees with split then pack") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto w = oracle::random_gaussian(1 + seed % 7, 1 + seed % 11, seed);
        w(0, 0) = 0.0;
        CHECK(pack_signs_of(w) == pack(sign_split(w).signs));
    }
}
