#include "bitstack/avd.hpp"

#include <algorithm>

#include "bitstack/block_size.hpp"
#include "bitstack/kernels.hpp"
#include "bitstack/linalg.hpp"

namespace bitstack::avd {

std::size_t effective_rank(std::size_t rows, std::size_t cols, std::size_t k) {
    return std::min({k, rows, cols});
}

AvdStep avd_step(const DenseMatrix& residual, std::size_t k, Precision precision) {
    if (k < 1) throw Error(ErrorCode::InvalidRank, "rank must be at least 1");
    if (residual.empty()) throw Error(ErrorCode::InvalidArgument, "empty residual");

    auto split = signpack::sign_split(residual);
    auto factors = linalg::rank_k_factors(split.magnitudes,
                                          effective_rank(residual.rows(), residual.cols(), k));
    round_to_precision(factors.a, precision);
    round_to_precision(factors.b, precision);

    BlockPayload payload{signpack::pack(split.signs), std::move(factors.a), std::move(factors.b)};
    DenseMatrix next = residual - restore(payload);
    return {std::move(payload), std::move(next)};
}

DenseMatrix restore(const BlockPayload& payload) {
    return kernels::signed_outer(payload.signs.bits, payload.left, payload.right);
}

DenseMatrix restore(const ResidualBlock& block) {
    return kernels::signed_outer(block.signs.bits, block.left, block.right);
}

WeightStack decompose_weight(const DenseMatrix& w_scaled, std::size_t n_iters, std::size_t k,
                             Precision precision, WeightId id) {
    if (n_iters < 1) throw Error(ErrorCode::InvalidArgument, "n_iters must be at least 1");
    WeightStack stack{std::move(id), {}, 0};
    stack.blocks.reserve(n_iters);
    DenseMatrix residual = w_scaled;
    for (std::size_t i = 1; i <= n_iters; ++i) {
        AvdStep step = avd_step(residual, k, precision);
        ResidualBlock block;
        block.weight = stack.weight;
        block.iteration = static_cast<std::uint32_t>(i);
        block.size_bits = loader::block_size_bits(w_scaled.rows(), w_scaled.cols(),
                                                  step.payload.left.cols(), precision);
        block.signs = std::move(step.payload.signs);
        block.left = std::move(step.payload.left);
        block.right = std::move(step.payload.right);
        stack.blocks.push_back(std::move(block));
        residual = std::move(step.new_residual);
    }
    return stack;
}

DenseMatrix reconstruct(const WeightStack& stack, std::size_t level) {
    if (level > stack.blocks.size())
        throw Error(ErrorCode::LevelOutOfRange, "level " + std::to_string(level) + " exceeds stack depth " +
                                                    std::to_string(stack.blocks.size()));
    DenseMatrix sum(stack.rows(), stack.cols());
    for (std::size_t i = 0; i < level; ++i) sum += restore(stack.blocks[i]);
    return sum;
}

void validate(const WeightStack& stack, Precision precision) {
    for (std::size_t i = 0; i < stack.blocks.size(); ++i) {
        const auto& b = stack.blocks[i];
        if (b.iteration != i + 1)
            throw Error(ErrorCode::InvalidArgument, "stack " + stack.weight.str() + ": block " +
                                                        std::to_string(i) + " has iteration " +
                                                        std::to_string(b.iteration));
        if (b.weight != stack.weight)
            throw Error(ErrorCode::InvalidArgument, "stack " + stack.weight.str() + " holds a block of " +
                                                        b.weight.str());
        if (b.rows() != stack.rows() || b.cols() != stack.cols() || b.left.rows() != b.rows() ||
            b.right.rows() != b.cols() || b.left.cols() != b.right.cols())
            throw Error(ErrorCode::ShapeMismatch, "inconsistent block shapes in " + stack.weight.str());
        signpack::validate(b.signs);
        if (b.size_bits != loader::block_size_bits(b.rows(), b.cols(), b.rank(), precision))
            throw Error(ErrorCode::InvalidArgument, "declared block size disagrees with the size formula");
    }
}

} // namespace bitstack::avd
