#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "bitstack/avd.hpp"
#include "bitstack/block_size.hpp"
#include "bitstack/scaling.hpp"
#include "bitstack/stack.hpp"

namespace bitstack::loader {

/// Everything needed to materialize the model at any size: per-weight stacks,
/// their scaling vectors and the global load order.
struct CompressedModel {
    std::vector<avd::WeightStack> stacks;
    std::vector<scaling::ScalingVector> scaling;
    stack::UniversalStack order;
    Precision precision = Precision::Half;

    std::size_t n_weights() const noexcept { return stacks.size(); }
    std::size_t n_iters() const noexcept { return stacks.empty() ? 0 : stacks.front().n_iters(); }

    /// Declared bit size of every block, aligned with order.order.
    std::vector<std::uint64_t> block_bits_in_order() const;

    friend bool operator==(const CompressedModel&, const CompressedModel&) = default;
};

struct BudgetPlan {
    std::uint64_t budget_bytes = 0;
    std::size_t prefix_len = 0;
    std::vector<std::size_t> per_weight_level;
    std::uint64_t total_bytes = 0;
    bool degenerate = true; // some weight is at level 0
    std::uint64_t order_fingerprint = 0;

    friend bool operator==(const BudgetPlan&, const BudgetPlan&) = default;
};

/// Identifies the order and block sizes a plan was resolved against.
std::uint64_t fingerprint(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits);

/// Longest prefix of the order whose byte total (ceil(bits/8) per block) fits the budget.
BudgetPlan resolve_budget(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits,
                          std::uint64_t budget_bytes, std::size_t n_weights);

/// Plan holding exactly the first prefix_len blocks.
BudgetPlan plan_for_prefix(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits,
                           std::size_t prefix_len, std::size_t n_weights);

std::uint64_t total_memory(const BudgetPlan& plan, std::span<const std::uint64_t> block_bits);

/// Bytes not covered by the block formula: scaling vectors (as stored, 8 bytes
/// per entry) and fixed per-block metadata.
std::uint64_t overhead_bytes(const CompressedModel& model);

/// Blocks moved by apply_plan, in the order they were applied.
struct DeltaReport {
    std::vector<stack::BlockRef> loaded;
    std::vector<stack::BlockRef> offloaded; // reverse order of the stack
    std::uint64_t bytes_moved = 0;

    bool empty() const noexcept { return loaded.empty() && offloaded.empty(); }
};

/// Reconstructed (still scaled) weights at the levels of `plan`. Instances are
/// immutable snapshots; apply_plan returns a new one.
class LoadedModel {
public:
    /// All weights at level 0.
    explicit LoadedModel(std::shared_ptr<const CompressedModel> model);

    const CompressedModel& model() const noexcept { return *model_; }
    const std::shared_ptr<const CompressedModel>& shared_model() const noexcept { return model_; }
    const BudgetPlan& plan() const noexcept { return plan_; }
    std::span<const DenseMatrix> scaled_weights() const noexcept { return weights_; }
    const DenseMatrix& scaled_weight(std::size_t w) const { return weights_.at(w); }

    /// diag(1/s) * reconstruction: the weight to use in an ordinary product.
    DenseMatrix effective_weight(std::size_t w) const;

    /// x * effective_weight(w), computed as (x diag(1/s)) * reconstruction.
    DenseMatrix apply(std::size_t w, const DenseMatrix& x) const;

    friend std::pair<LoadedModel, DeltaReport> apply_plan(const LoadedModel& current, const BudgetPlan& target);

private:
    std::shared_ptr<const CompressedModel> model_;
    std::vector<std::uint64_t> block_bits_;
    BudgetPlan plan_;
    std::vector<DenseMatrix> weights_;
};

/// Loads or offloads the symmetric difference between the current and target
/// prefixes, updating reconstructions incrementally. Offloads run from the top
/// of the stack down. Throws PlanMismatch if the plan was resolved against a
/// different order.
std::pair<LoadedModel, DeltaReport> apply_plan(const LoadedModel& current, const BudgetPlan& target);

/// Convenience: resolve and apply in one step.
std::pair<LoadedModel, DeltaReport> load_budget(const LoadedModel& current, std::uint64_t budget_bytes);

/// From-scratch reconstruction of every weight at the plan's levels.
std::vector<DenseMatrix> reconstruct_fresh(const CompressedModel& model, const BudgetPlan& plan);

} // namespace bitstack::loader
