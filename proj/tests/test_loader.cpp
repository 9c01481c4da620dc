#include <doctest.h>

#include "bitstack/harness.hpp"
#include "bitstack/loader.hpp"
#include "oracles.hpp"

using namespace bitstack;
using namespace bitstack::loader;

namespace {

stack::UniversalStack round_robin(std::size_t n_weights, std::size_t n_iters) {
    return stack::unsorted_order(n_weights, n_iters);
}

std::shared_ptr<const CompressedModel> small_model(std::uint64_t seed, stack::SortStrategy strategy) {
    harness::NetworkConfig cfg{3, 2, 12, 8};
    const auto net = harness::build_reference_network(cfg, seed);
    const auto calib = harness::generate_calibration(12, 24, seed + 1);
    auto model = harness::compress_network(net, calib, 5, 3, Precision::Half);
    harness::sort_model(model, strategy, net, harness::head_rows(calib, 8), seed);
    return std::make_shared<const CompressedModel>(std::move(model));
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode{};
}

} // namespace

TEST_CASE("budget resolution on equal blocks") {
    const auto u = round_robin(3, 1);
    const std::vector<std::uint64_t> bits{80, 80, 80};
    const auto plan = resolve_budget(u, bits, 25, 3);
    CHECK(plan.prefix_len == 2);
    CHECK(plan.total_bytes == 20);
    CHECK(plan.per_weight_level == std::vector<std::size_t>{1, 1, 0});
    CHECK(plan.degenerate);
    CHECK(total_memory(plan, bits) == 20);

    const auto none = resolve_budget(u, bits, 0, 3);
    CHECK(none.prefix_len == 0);
    CHECK(none.total_bytes == 0);
    CHECK(none.per_weight_level == std::vector<std::size_t>{0, 0, 0});
    CHECK(none.degenerate);
    CHECK(total_memory(none, bits) == 0);

    const auto all = resolve_budget(u, bits, 1000, 3);
    CHECK(all.prefix_len == 3);
    CHECK_FALSE(all.degenerate);
}

TEST_CASE("blocks are charged whole bytes") {
    const auto u = round_robin(2, 1);
    const std::vector<std::uint64_t> bits{9, 9};
    CHECK(resolve_budget(u, bits, 3, 2).prefix_len == 1);
    CHECK(resolve_budget(u, bits, 4, 2).prefix_len == 2);
}

TEST_CASE("memory of a single large block") {
    const auto u = round_robin(1, 1);
    const std::vector<std::uint64_t> bits{block_size_bits(4096, 4096, 16)};
    const auto plan = plan_for_prefix(u, bits, 1, 1);
    CHECK(total_memory(plan, bits) == 2'359'296);
}

TEST_CASE("budget resolution on a scaled-down 8B-parameter layout matches cumulative sums") {
    // 32 layers of q, k, v, o, gate, up, down projections at k = 16, sizes divided by 1000
    const std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes{
        {4096, 4096}, {4096, 1024}, {4096, 1024}, {4096, 4096}, {4096, 14336}, {4096, 14336}, {14336, 4096}};
    std::vector<std::uint64_t> weight_bits;
    for (int layer = 0; layer < 32; ++layer)
        for (auto [m, n] : shapes) weight_bits.push_back(block_size_bits(m, n, 16) / 1000);
    const std::size_t nw = weight_bits.size(), n_iters = 16;

    for (std::uint64_t seed : {1, 2, 3}) {
        const auto u = stack::sort_random(nw, n_iters, seed);
        std::vector<std::uint64_t> bits;
        for (const auto& r : u.order) bits.push_back(weight_bits[r.weight]);
        for (std::uint64_t budget : {std::uint64_t{0}, std::uint64_t{4709} * (1 << 20) / 1000, std::uint64_t{1234567},
                                     std::uint64_t{1} << 40}) {
            std::uint64_t sum = 0;
            std::size_t prefix = 0;
            for (auto b : bits) {
                if (sum + (b + 7) / 8 > budget) break;
                sum += (b + 7) / 8;
                ++prefix;
            }
            const auto plan = resolve_budget(u, bits, budget, nw);
            CHECK(plan.prefix_len == prefix);
            CHECK(plan.total_bytes == sum);
            CHECK(total_memory(plan, bits) == sum);
            std::size_t levels = 0;
            for (auto l : plan.per_weight_level) levels += l;
            CHECK(levels == prefix);
        }
    }
}

TEST_CASE("applying the current plan moves nothing") {
    const auto model = small_model(1, stack::SortStrategy::Average);
    LoadedModel base(model);
    auto [mid, d1] = load_budget(base, harness::full_model_bytes(*model) / 2);
    auto [same, d2] = apply_plan(mid, mid.plan());
    CHECK(d2.empty());
    CHECK(d2.bytes_moved == 0);
    for (std::size_t w = 0; w < model->n_weights(); ++w) CHECK(same.scaled_weight(w) == mid.scaled_weight(w));
}

TEST_CASE("growing the prefix by one adds exactly that block") {
    const auto model = small_model(2, stack::SortStrategy::Random);
    const auto bits = model->block_bits_in_order();
    LoadedModel current(model);
    for (std::size_t p = 1; p <= 6; ++p) {
        auto [next, delta] = apply_plan(current, plan_for_prefix(model->order, bits, p, model->n_weights()));
        const auto ref = model->order.order[p - 1];
        REQUIRE(delta.loaded.size() == 1);
        CHECK(delta.loaded[0] == ref);
        CHECK(delta.offloaded.empty());
        CHECK(delta.bytes_moved == block_size_bytes(bits[p - 1]));
        auto expected = current.scaled_weight(ref.weight);
        expected += avd::restore(model->stacks[ref.weight].blocks[ref.iteration - 1]);
        CHECK(next.scaled_weight(ref.weight) == expected);
        current = next;
    }
}

TEST_CASE("offloading runs from the top of the stack") {
    const auto model = small_model(3, stack::SortStrategy::Greedy);
    const auto bits = model->block_bits_in_order();
    LoadedModel base(model);
    auto [full, d1] = apply_plan(base, plan_for_prefix(model->order, bits, 10, model->n_weights()));
    auto [small, d2] = apply_plan(full, plan_for_prefix(model->order, bits, 6, model->n_weights()));
    CHECK(d2.loaded.empty());
    REQUIRE(d2.offloaded.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(d2.offloaded[i] == model->order.order[9 - i]);
    CHECK(small.plan().prefix_len == 6);
    // snapshots are untouched
    CHECK(full.plan().prefix_len == 10);
    CHECK(base.plan().prefix_len == 0);
}

TEST_CASE("incremental loading matches fresh reconstruction over a random walk") {
    const auto model = small_model(4, stack::SortStrategy::Average);
    const auto full = harness::full_model_bytes(*model);
    Rng rng(50);
    LoadedModel current(model);
    for (int step = 0; step < 50; ++step) {
        current = load_budget(current, rng.below(full + full / 10)).first;
        const auto fresh = reconstruct_fresh(*model, current.plan());
        for (std::size_t w = 0; w < model->n_weights(); ++w)
            REQUIRE(oracle::distance(current.scaled_weight(w), fresh[w]) < 1e-9);
    }
}

TEST_CASE("plans from another order are rejected") {
    const auto a = small_model(5, stack::SortStrategy::Average);
    const auto b = small_model(5, stack::SortStrategy::Random);
    LoadedModel loaded(a);
    const auto foreign = resolve_budget(b->order, b->block_bits_in_order(), 5000, b->n_weights());
    CHECK(code_of([&] { apply_plan(loaded, foreign); }) == ErrorCode::PlanMismatch);
}

TEST_CASE("effective weights undo the scaling") {
    const auto model = small_model(6, stack::SortStrategy::Average);
    auto [loaded, d] = load_budget(LoadedModel(model), harness::full_model_bytes(*model));
    const auto x = oracle::random_gaussian(4, model->stacks[0].rows(), 1);
    const auto eff = loaded.effective_weight(0);
    CHECK(oracle::relative_distance(eff, oracle::unscale(loaded.scaled_weight(0), model->scaling[0].values())) <
          1e-15);
    CHECK(oracle::relative_distance(loaded.apply(0, x), oracle::matmul(x, eff)) < 1e-10);
}

TEST_CASE("overhead accounting") {
    const auto model = small_model(7, stack::SortStrategy::Random);
    std::uint64_t expected = 16 * model->order.order.size();
    for (const auto& s : model->scaling) expected += 8 * s.size();
    CHECK(overhead_bytes(*model) == expected);
}
