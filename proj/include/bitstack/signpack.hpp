#pragma once

#include <cstdint>
#include <vector>

#include "bitstack/matrix.hpp"

namespace bitstack::signpack {

/// Matrix of +1/-1 entries, stored as signed bytes.
class SignMatrix {
public:
    SignMatrix() = default;
    SignMatrix(std::size_t rows, std::size_t cols, std::vector<std::int8_t> signs);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::int8_t operator()(std::size_t i, std::size_t j) const noexcept { return signs_[i * cols_ + j]; }
    const std::vector<std::int8_t>& signs() const noexcept { return signs_; }

    friend bool operator==(const SignMatrix&, const SignMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::int8_t> signs_;
};

/// One bit per entry, row-major, least-significant bit first; 1 means +1.
/// The unused high bits of the final byte are zero.
struct PackedSignMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;

    friend bool operator==(const PackedSignMatrix&, const PackedSignMatrix&) = default;
};

constexpr std::size_t packed_size(std::size_t rows, std::size_t cols) { return (rows * cols + 7) / 8; }

struct SignSplit {
    SignMatrix signs;
    DenseMatrix magnitudes;
};

/// w == signs * magnitudes entrywise; zero maps to +1.
SignSplit sign_split(const DenseMatrix& w);

PackedSignMatrix pack(const SignMatrix& s);

/// Throws MalformedBuffer on a wrong length or nonzero padding bits.
SignMatrix unpack(const PackedSignMatrix& p);

/// Checks the buffer invariants without expanding it.
void validate(const PackedSignMatrix& p);

/// sign_split followed by pack, without the intermediate SignMatrix.
PackedSignMatrix pack_signs_of(const DenseMatrix& w);

} // namespace bitstack::signpack
