#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bitstack/matrix.hpp"
#include "bitstack/precision.hpp"
#include "bitstack/signpack.hpp"

namespace bitstack::avd {

/// Identifies one weight matrix: its layer and its role within the layer.
/// Ordered by layer, then role name.
struct WeightId {
    std::uint32_t layer = 0;
    std::string role;

    friend auto operator<=>(const WeightId&, const WeightId&) = default;
    friend bool operator==(const WeightId&, const WeightId&) = default;

    std::string str() const { return std::to_string(layer) + "." + role; }
};

/// Sign matrix plus rank-k factors of the magnitudes, factors already rounded
/// to the storage precision.
struct BlockPayload {
    signpack::PackedSignMatrix signs;
    DenseMatrix left;  // m x k
    DenseMatrix right; // n x k
};

struct ResidualBlock {
    WeightId weight;
    std::uint32_t iteration = 0; // 1-based
    signpack::PackedSignMatrix signs;
    DenseMatrix left;
    DenseMatrix right;
    std::uint64_t size_bits = 0;
    std::optional<double> importance;

    std::size_t rows() const noexcept { return signs.rows; }
    std::size_t cols() const noexcept { return signs.cols; }
    std::size_t rank() const noexcept { return left.cols(); }

    friend bool operator==(const ResidualBlock&, const ResidualBlock&) = default;
};

struct WeightStack {
    WeightId weight;
    std::vector<ResidualBlock> blocks; // blocks[i].iteration == i + 1
    std::size_t loaded_level = 0;

    std::size_t rows() const noexcept { return blocks.empty() ? 0 : blocks.front().rows(); }
    std::size_t cols() const noexcept { return blocks.empty() ? 0 : blocks.front().cols(); }
    std::size_t n_iters() const noexcept { return blocks.size(); }

    friend bool operator==(const WeightStack&, const WeightStack&) = default;
};

struct AvdStep {
    BlockPayload payload;
    DenseMatrix new_residual;
};

/// Rank actually used for an m x n residual: min(k, m, n).
std::size_t effective_rank(std::size_t rows, std::size_t cols, std::size_t k);

/// One absolute value decomposition of the residual. The new residual is
/// computed from the rounded factors, so it is exactly what later iterations
/// have to correct.
AvdStep avd_step(const DenseMatrix& residual, std::size_t k, Precision precision = Precision::Half);

/// sign * (left * right^T).
DenseMatrix restore(const ResidualBlock& block);
DenseMatrix restore(const BlockPayload& payload);

/// n_iters successive decompositions of the (scaled) weight.
WeightStack decompose_weight(const DenseMatrix& w_scaled, std::size_t n_iters, std::size_t k,
                             Precision precision = Precision::Half, WeightId id = {});

/// Sum of restored blocks 1..level; level 0 gives the zero matrix.
DenseMatrix reconstruct(const WeightStack& stack, std::size_t level);

/// Checks iteration contiguity and declared sizes.
void validate(const WeightStack& stack, Precision precision);

} // namespace bitstack::avd
