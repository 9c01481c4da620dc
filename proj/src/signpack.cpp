#include "bitstack/signpack.hpp"

#include <cmath>
#include <string>

namespace bitstack::signpack {

SignMatrix::SignMatrix(std::size_t rows, std::size_t cols, std::vector<std::int8_t> signs)
    : rows_(rows), cols_(cols), signs_(std::move(signs)) {
    if (signs_.size() != rows_ * cols_)
        throw Error(ErrorCode::DimensionMismatch, "sign matrix length mismatch");
    for (auto s : signs_)
        if (s != 1 && s != -1) throw Error(ErrorCode::InvalidArgument, "sign entry must be +1 or -1");
}

SignSplit sign_split(const DenseMatrix& w) {
    std::vector<std::int8_t> signs(w.size());
    DenseMatrix mags(w.rows(), w.cols());
    const auto src = w.data();
    auto dst = mags.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        signs[i] = src[i] >= 0.0 ? 1 : -1;
        dst[i] = std::abs(src[i]);
    }
    return {SignMatrix(w.rows(), w.cols(), std::move(signs)), std::move(mags)};
}

PackedSignMatrix pack(const SignMatrix& s) {
    PackedSignMatrix p{s.rows(), s.cols(), std::vector<std::uint8_t>(packed_size(s.rows(), s.cols()), 0)};
    const auto& signs = s.signs();
    for (std::size_t i = 0; i < signs.size(); ++i)
        if (signs[i] > 0) p.bits[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    return p;
}

PackedSignMatrix pack_signs_of(const DenseMatrix& w) {
    PackedSignMatrix p{w.rows(), w.cols(), std::vector<std::uint8_t>(packed_size(w.rows(), w.cols()), 0)};
    const auto src = w.data();
    for (std::size_t i = 0; i < src.size(); ++i)
        if (src[i] >= 0.0) p.bits[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    return p;
}

void validate(const PackedSignMatrix& p) {
    const std::size_t expected = packed_size(p.rows, p.cols);
    if (p.bits.size() != expected)
        throw Error(ErrorCode::MalformedBuffer, "packed sign buffer has " + std::to_string(p.bits.size()) +
                                                    " bytes, expected " + std::to_string(expected));
    const std::size_t used = p.rows * p.cols % 8;
    if (used != 0) {
        const auto pad_mask = static_cast<std::uint8_t>(0xffu << used);
        if (p.bits.back() & pad_mask)
            throw Error(ErrorCode::MalformedBuffer, "nonzero padding bits in packed sign buffer");
    }
}

SignMatrix unpack(const PackedSignMatrix& p) {
    validate(p);
    const std::size_t count = p.rows * p.cols;
    std::vector<std::int8_t> signs(count);
    for (std::size_t i = 0; i < count; ++i) signs[i] = ((p.bits[i >> 3] >> (i & 7)) & 1u) ? 1 : -1;
    return SignMatrix(p.rows, p.cols, std::move(signs));
}

} // namespace bitstack::signpack
