#include "bitstack/loader.hpp"

#include <functional>
#include <string>
#include <string_view>


namespace bitstack::loader {

std::vector<std::uint64_t> CompressedModel::block_bits_in_order() const {
    std::vector<std::uint64_t> bits;
    bits.reserve(order.order.size());
    for (const auto& ref : order.order) {
        if (ref.weight >= stacks.size() || ref.iteration < 1 ||
            ref.iteration > stacks[ref.weight].blocks.size())
            throw Error(ErrorCode::RangeOutOfBounds, "order references a missing block");
        bits.push_back(stacks[ref.weight].blocks[ref.iteration - 1].size_bits);
    }
    return bits;
}

std::uint64_t fingerprint(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits) {
    std::string bytes;
    bytes.reserve(u.order.size() * 24);
    auto put = [&](std::uint64_t v) { bytes.append(reinterpret_cast<const char*>(&v), sizeof v); };
    for (const auto& ref : u.order) {
        put(ref.weight);
        put(ref.iteration);
    }
    for (auto b : block_bits) put(b);
    return std::hash<std::string_view>{}(bytes);
}

namespace {

BudgetPlan plan_from_prefix(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits,
                            std::size_t prefix_len, std::size_t n_weights) {
    BudgetPlan plan;
    plan.prefix_len = prefix_len;
    plan.per_weight_level.assign(n_weights, 0);
    for (std::size_t i = 0; i < prefix_len; ++i) {
        const auto& ref = u.order[i];
        if (ref.weight >= n_weights) throw Error(ErrorCode::RangeOutOfBounds, "order references a missing weight");
        ++plan.per_weight_level[ref.weight];
        plan.total_bytes += block_size_bytes(block_bits[i]);
    }
    plan.degenerate = false;
    for (auto level : plan.per_weight_level)
        if (level == 0) plan.degenerate = true;
    plan.order_fingerprint = fingerprint(u, block_bits);
    return plan;
}

} // namespace

BudgetPlan resolve_budget(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits,
                          std::uint64_t budget_bytes, std::size_t n_weights) {
    if (block_bits.size() != u.order.size())
        throw Error(ErrorCode::DimensionMismatch, "one block size per order entry is required");
    std::size_t prefix = 0;
    std::uint64_t used = 0;
    while (prefix < block_bits.size()) {
        const std::uint64_t next = block_size_bytes(block_bits[prefix]);
        if (next > budget_bytes - used) break;
        used += next;
        ++prefix;
    }
    BudgetPlan plan = plan_from_prefix(u, block_bits, prefix, n_weights);
    plan.budget_bytes = budget_bytes;
    return plan;
}

BudgetPlan plan_for_prefix(const stack::UniversalStack& u, std::span<const std::uint64_t> block_bits,
                           std::size_t prefix_len, std::size_t n_weights) {
    if (block_bits.size() != u.order.size())
        throw Error(ErrorCode::DimensionMismatch, "one block size per order entry is required");
    if (prefix_len > u.order.size()) throw Error(ErrorCode::RangeOutOfBounds, "prefix longer than the order");
    BudgetPlan plan = plan_from_prefix(u, block_bits, prefix_len, n_weights);
    plan.budget_bytes = plan.total_bytes;
    return plan;
}

std::uint64_t total_memory(const BudgetPlan& plan, std::span<const std::uint64_t> block_bits) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < plan.prefix_len && i < block_bits.size(); ++i)
        total += block_size_bytes(block_bits[i]);
    return total;
}

std::uint64_t overhead_bytes(const CompressedModel& model) {
    std::uint64_t bytes = 0;
    for (const auto& s : model.scaling) bytes += 8 * s.size();
    bytes += 16 * model.order.order.size();
    return bytes;
}

LoadedModel::LoadedModel(std::shared_ptr<const CompressedModel> model) : model_(std::move(model)) {
    if (!model_) throw Error(ErrorCode::InvalidArgument, "LoadedModel needs a model");
    if (model_->scaling.size() != model_->stacks.size())
        throw Error(ErrorCode::DimensionMismatch, "one scaling vector per weight is required");
    block_bits_ = model_->block_bits_in_order();
    plan_ = plan_from_prefix(model_->order, block_bits_, 0, model_->n_weights());
    weights_.reserve(model_->n_weights());
    for (const auto& s : model_->stacks) weights_.emplace_back(s.rows(), s.cols());
}

DenseMatrix LoadedModel::effective_weight(std::size_t w) const {
    return scaling::remove_scaling(weights_.at(w), model_->scaling.at(w));
}

DenseMatrix LoadedModel::apply(std::size_t w, const DenseMatrix& x) const {
    return scaling::scaled_product(x, model_->scaling.at(w), weights_.at(w));
}

std::pair<LoadedModel, DeltaReport> apply_plan(const LoadedModel& current, const BudgetPlan& target) {
    if (target.order_fingerprint != current.plan_.order_fingerprint ||
        target.per_weight_level.size() != current.weights_.size() ||
        target.prefix_len > current.block_bits_.size())
        throw Error(ErrorCode::PlanMismatch, "plan was resolved against a different universal stack");

    LoadedModel next = current;
    DeltaReport delta;
    const auto& order = current.model_->order.order;
    const auto& stacks = current.model_->stacks;
    const std::size_t from = current.plan_.prefix_len;
    const std::size_t to = target.prefix_len;

    for (std::size_t i = from; i < to; ++i) {
        const auto& ref = order[i];
        next.weights_[ref.weight] += avd::restore(stacks[ref.weight].blocks[ref.iteration - 1]);
        delta.loaded.push_back(ref);
        delta.bytes_moved += block_size_bytes(current.block_bits_[i]);
    }
    for (std::size_t i = from; i > to; --i) {
        const auto& ref = order[i - 1];
        next.weights_[ref.weight] -= avd::restore(stacks[ref.weight].blocks[ref.iteration - 1]);
        delta.offloaded.push_back(ref);
        delta.bytes_moved += block_size_bytes(current.block_bits_[i - 1]);
    }
    next.plan_ = target;
    return {std::move(next), std::move(delta)};
}

std::pair<LoadedModel, DeltaReport> load_budget(const LoadedModel& current, std::uint64_t budget_bytes) {
    const auto& model = current.model();
    const auto bits = model.block_bits_in_order();
    return apply_plan(current, resolve_budget(model.order, bits, budget_bytes, model.n_weights()));
}

std::vector<DenseMatrix> reconstruct_fresh(const CompressedModel& model, const BudgetPlan& plan) {
    if (plan.per_weight_level.size() != model.n_weights())
        throw Error(ErrorCode::PlanMismatch, "plan covers a different number of weights");
    for (std::size_t w = 0; w < model.n_weights(); ++w)
        if (plan.per_weight_level[w] > model.stacks[w].n_iters())
            throw Error(ErrorCode::LevelOutOfRange, "plan level exceeds stack depth");
    std::vector<DenseMatrix> out(model.n_weights());
    const auto count = static_cast<std::ptrdiff_t>(model.n_weights());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ww = 0; ww < count; ++ww) {
        const auto w = static_cast<std::size_t>(ww);
        out[w] = avd::reconstruct(model.stacks[w], plan.per_weight_level[w]);
    }
    return out;
}

} // namespace bitstack::loader
