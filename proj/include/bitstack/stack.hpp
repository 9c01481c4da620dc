#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bitstack/avd.hpp"

namespace bitstack::stack {

/// Reference to block `iteration` (1-based) of weight `weight` (index into the
/// model's weight list).
struct BlockRef {
    std::size_t weight = 0;
    std::uint32_t iteration = 0;

    friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

enum class SortStrategy : std::uint8_t { Unsorted = 0, Average = 1, Greedy = 2, Random = 3 };

std::string_view strategy_name(SortStrategy s);
SortStrategy parse_strategy(std::string_view name);

/// Global load order over every block of every weight. scores[i] is the
/// importance recorded for order[i] (lower is more important; zero when the
/// strategy does not measure it).
struct UniversalStack {
    std::vector<BlockRef> order;
    SortStrategy strategy = SortStrategy::Unsorted;
    std::vector<double> scores;

    friend bool operator==(const UniversalStack&, const UniversalStack&) = default;
};

/// What an evaluator sees: the level of every weight and the matching
/// reconstructed (scaled) matrices. `candidate` names the block under
/// assessment, if any.
struct ModelView {
    std::span<const std::size_t> levels;
    std::span<const DenseMatrix* const> weights;
    std::optional<BlockRef> candidate;
};

/// Lower is better. Must be deterministic and safe to call concurrently.
using Evaluator = std::function<double(const ModelView&)>;

/// Round-robin iteration-major order without scores.
UniversalStack unsorted_order(std::size_t n_weights, std::size_t n_iters);

/// Rounds i = 1..n: with every weight at level i-1, each weight's block i is
/// loaded alone and scored; round i is appended in ascending score order, ties
/// broken by WeightId.
UniversalStack sort_average(std::span<const avd::WeightStack> stacks, const Evaluator& eval);

/// Scores each (weight, level) with every other weight frozen at floor(n/2),
/// then emits blocks lowest score first subject to per-weight iteration order.
UniversalStack sort_greedy(std::span<const avd::WeightStack> stacks, const Evaluator& eval);

/// Seeded uniform interleaving of the per-weight stacks.
UniversalStack sort_random(std::size_t n_weights, std::size_t n_iters, std::uint64_t seed);

/// Copies the recorded scores of measuring strategies onto the blocks'
/// importance field; clears it for Unsorted and Random.
void annotate_importance(std::span<avd::WeightStack> stacks, const UniversalStack& u);

struct Violation {
    enum class Kind { Coverage, Monotonicity, Layering, ScoreOrder };
    Kind kind;
    std::size_t position;
    std::string message;
};

struct OrderReport {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
    std::size_t count(Violation::Kind kind) const;
};

/// Coverage and per-weight monotonicity for every strategy; layering and
/// within-round score order additionally for Average.
OrderReport verify_order(const UniversalStack& u, std::size_t n_weights, std::size_t n_iters);

/// Largest (max level - min level) over all prefixes of the order.
std::size_t max_prefix_spread(std::span<const BlockRef> order, std::size_t n_weights);

} // namespace bitstack::stack
