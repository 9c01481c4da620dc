#include <doctest.h>

#include <algorithm>
#include <map>

#include "bitstack/harness.hpp"
#include "bitstack/stack.hpp"
#include "oracles.hpp"

using namespace bitstack;
using namespace bitstack::stack;

namespace {

std::vector<avd::WeightStack> tiny_stacks(std::vector<avd::WeightId> ids, std::size_t n_iters) {
    std::vector<avd::WeightStack> out;
    std::uint64_t seed = 100;
    for (auto& id : ids) out.push_back(avd::decompose_weight(oracle::random_gaussian(3, 2, seed++), n_iters, 1,
                                                            Precision::Half, std::move(id)));
    return out;
}

std::vector<BlockRef> refs(std::initializer_list<std::pair<std::size_t, std::uint32_t>> list) {
    std::vector<BlockRef> out;
    for (auto [w, i] : list) out.push_back({w, i});
    return out;
}

// Positions that follow a higher iteration of the same weight, by direct search.
std::vector<std::size_t> naive_monotonicity(const std::vector<BlockRef>& order) {
    std::vector<std::size_t> bad;
    for (std::size_t p = 0; p < order.size(); ++p)
        for (std::size_t q = 0; q < p; ++q)
            if (order[q].weight == order[p].weight && order[q].iteration > order[p].iteration) {
                bad.push_back(p);
                break;
            }
    return bad;
}

std::size_t naive_spread(const std::vector<BlockRef>& order, std::size_t n_weights) {
    std::vector<std::size_t> level(n_weights, 0);
    std::size_t spread = 0;
    for (const auto& r : order) {
        ++level[r.weight];
        const auto [lo, hi] = std::minmax_element(level.begin(), level.end());
        spread = std::max(spread, *hi - *lo);
    }
    return spread;
}

struct TinyModel {
    harness::ReferenceNetwork net;
    DenseMatrix calib;
    loader::CompressedModel model;
};

TinyModel tiny_model(std::uint64_t seed) {
    harness::NetworkConfig cfg{3, 1, 6, 0};
    auto net = harness::build_reference_network(cfg, seed);
    auto calib = harness::generate_calibration(6, 16, seed + 1);
    auto model = harness::compress_network(net, calib, 2, 2, Precision::Half);
    return {std::move(net), std::move(calib), std::move(model)};
}

// Score of the network whose weight w is at level[w], by explicit reconstruction and a loop forward pass.
double brute_force_score(const TinyModel& t, const std::vector<std::size_t>& level) {
    std::vector<DenseMatrix> weights;
    for (std::size_t w = 0; w < t.model.n_weights(); ++w) {
        const auto& s = t.model.stacks[w];
        DenseMatrix sum(s.rows(), s.cols());
        for (std::size_t i = 0; i < level[w]; ++i) {
            const auto& b = s.blocks[i];
            for (std::size_t r = 0; r < b.rows(); ++r)
                for (std::size_t c = 0; c < b.cols(); ++c) {
                    const std::size_t bit = r * b.cols() + c;
                    const double sign = (b.signs.bits[bit / 8] >> (bit % 8)) & 1 ? 1.0 : -1.0;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < b.rank(); ++k) dot += b.left(r, k) * b.right(c, k);
                    sum(r, c) += sign * dot;
                }
        }
        weights.push_back(oracle::unscale(sum, t.model.scaling[w].values()));
    }
    const auto& cfg = t.net.config;
    return oracle::mse(oracle::naive_forward(cfg.layers, cfg.maps, t.net.weights, t.calib),
                       oracle::naive_forward(cfg.layers, cfg.maps, weights, t.calib));
}

Evaluator surrogate(const TinyModel& t) {
    auto ev = std::make_shared<harness::SurrogateEvaluator>(t.net, t.model.scaling, t.calib);
    return [ev](const ModelView& v) { return (*ev)(v); };
}

} // namespace

TEST_CASE("strategy names round-trip") {
    for (auto s : {SortStrategy::Unsorted, SortStrategy::Average, SortStrategy::Greedy, SortStrategy::Random})
        CHECK(parse_strategy(strategy_name(s)) == s);
    CHECK_THROWS_AS(parse_strategy("best"), Error);
}

TEST_CASE("a single weight is loaded in iteration order by every strategy") {
    const auto stacks = tiny_stacks({{0, "a"}}, 3);
    const Evaluator eval = [](const ModelView& v) { return 10.0 - static_cast<double>(v.levels[0]); };
    const auto expected = refs({{0, 1}, {0, 2}, {0, 3}});
    CHECK(sort_average(stacks, eval).order == expected);
    CHECK(sort_greedy(stacks, eval).order == expected);
    for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(sort_random(1, 3, seed).order == expected);
    CHECK(unsorted_order(1, 3).order == expected);
}

TEST_CASE("average sort with fixed stub scores") {
    const auto stacks = tiny_stacks({{0, "a"}, {0, "b"}}, 2);
    const std::map<std::pair<std::size_t, std::uint32_t>, double> fixed{
        {{0, 1}, 5.0}, {{1, 1}, 3.0}, {{0, 2}, 9.0}, {{1, 2}, 1.0}};
    const Evaluator eval = [&](const ModelView& v) {
        REQUIRE(v.candidate.has_value());
        return fixed.at({v.candidate->weight, v.candidate->iteration});
    };
    const auto u = sort_average(stacks, eval);
    CHECK(u.order == refs({{1, 1}, {0, 1}, {1, 2}, {0, 2}}));
    CHECK(u.scores == std::vector<double>{3.0, 5.0, 1.0, 9.0});
    CHECK(verify_order(u, 2, 2).ok());
}

TEST_CASE("average sort sees every other weight at the previous level") {
    const auto stacks = tiny_stacks({{0, "a"}, {0, "b"}, {1, "a"}}, 3);
    const Evaluator eval = [](const ModelView& v) {
        const auto i = v.candidate->iteration;
        for (std::size_t w = 0; w < v.levels.size(); ++w) {
            const std::size_t expected = w == v.candidate->weight ? i : i - 1;
            if (v.levels[w] != expected) throw std::runtime_error("unexpected level");
        }
        return 1.0;
    };
    const auto u = sort_average(stacks, eval);
    // equal scores fall back to WeightId order
    CHECK(u.order == refs({{0, 1}, {1, 1}, {2, 1}, {0, 2}, {1, 2}, {2, 2}, {0, 3}, {1, 3}, {2, 3}}));
}

TEST_CASE("ties are broken by WeightId, not by position") {
    const auto stacks = tiny_stacks({{2, "a"}, {0, "b"}, {0, "a"}}, 1);
    const auto u = sort_average(stacks, [](const ModelView&) { return 0.0; });
    CHECK(u.order == refs({{2, 1}, {1, 1}, {0, 1}}));
}

TEST_CASE("greedy sort with fixed stub scores") {
    const auto stacks = tiny_stacks({{0, "a"}, {0, "b"}, {0, "c"}}, 3);
    // per (weight, level); chains force a.1 before a.2 even though a.2 scores lower
    const std::map<std::pair<std::size_t, std::uint32_t>, double> fixed{
        {{0, 1}, 4.0}, {{0, 2}, 0.5}, {{0, 3}, 7.0}, {{1, 1}, 2.0}, {{1, 2}, 6.0},
        {{1, 3}, 6.5}, {{2, 1}, 3.0}, {{2, 2}, 1.0}, {{2, 3}, 0.1}};
    const Evaluator eval = [&](const ModelView& v) {
        for (std::size_t w = 0; w < v.levels.size(); ++w)
            if (w != v.candidate->weight && v.levels[w] != 1) throw std::runtime_error("not frozen at n/2");
        return fixed.at({v.candidate->weight, v.candidate->iteration});
    };
    const auto u = sort_greedy(stacks, eval);

    // stable sort by score, then a topological pass that emits each block
    // once its predecessor in the same stack is out
    std::vector<std::pair<double, BlockRef>> sorted;
    for (auto& [key, score] : fixed) sorted.push_back({score, {key.first, key.second}});
    std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<BlockRef> expected;
    std::vector<std::uint32_t> done(3, 0);
    while (expected.size() < sorted.size())
        for (auto& [score, ref] : sorted)
            if (ref.iteration == done[ref.weight] + 1) {
                expected.push_back(ref);
                ++done[ref.weight];
                break;
            }
    CHECK(u.order == expected);
    CHECK(u.order == refs({{1, 1}, {2, 1}, {2, 2}, {2, 3}, {0, 1}, {0, 2}, {1, 2}, {1, 3}, {0, 3}}));
    CHECK(verify_order(u, 3, 3).ok());
}

TEST_CASE("evaluator failures name the weight") {
    const auto stacks = tiny_stacks({{0, "a"}, {4, "mlp"}}, 2);
    const Evaluator eval = [](const ModelView& v) -> double {
        if (v.candidate->weight == 1) throw std::runtime_error("boom");
        return 1.0;
    };
    for (int strategy = 0; strategy < 2; ++strategy) {
        try {
            strategy == 0 ? sort_average(stacks, eval) : sort_greedy(stacks, eval);
            FAIL("expected EvaluatorFailure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EvaluatorFailure);
            CHECK(std::string(e.what()).find("4.mlp") != std::string::npos);
        }
    }
    const Evaluator nan_eval = [](const ModelView&) { return std::nan(""); };
    CHECK_THROWS_AS(sort_average(stacks, nan_eval), Error);
}

TEST_CASE("average sort matches an exhaustive brute-force evaluation") {
    const auto t = tiny_model(23);
    const auto u = sort_average(t.model.stacks, surrogate(t));

    std::vector<BlockRef> expected;
    const std::size_t nw = t.model.n_weights();
    for (std::uint32_t i = 1; i <= 2; ++i) {
        std::vector<std::pair<double, std::size_t>> round;
        for (std::size_t w = 0; w < nw; ++w) {
            std::vector<std::size_t> level(nw, i - 1);
            level[w] = i;
            round.push_back({brute_force_score(t, level), w});
        }
        std::sort(round.begin(), round.end());
        for (std::size_t r = 0; r < round.size(); ++r) {
            expected.push_back({round[r].second, i});
            CHECK(u.scores[(i - 1) * nw + r] == doctest::Approx(round[r].first).epsilon(1e-9));
        }
    }
    CHECK(u.order == expected);
}

TEST_CASE("greedy sort matches a brute-force run of the same procedure") {
    const auto t = tiny_model(23);
    const auto u = sort_greedy(t.model.stacks, surrogate(t));

    const std::size_t nw = t.model.n_weights(), n = 2;
    std::vector<std::vector<double>> score(nw, std::vector<double>(n + 1));
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t lv = 1; lv <= n; ++lv) {
            std::vector<std::size_t> level(nw, n / 2);
            level[w] = lv;
            score[w][lv] = brute_force_score(t, level);
        }
    std::vector<BlockRef> expected;
    std::vector<std::size_t> next(nw, 1);
    for (std::size_t step = 0; step < nw * n; ++step) {
        std::size_t best = nw;
        for (std::size_t w = 0; w < nw; ++w)
            if (next[w] <= n && (best == nw || score[w][next[w]] < score[best][next[best]])) best = w;
        expected.push_back({best, static_cast<std::uint32_t>(next[best]++)});
    }
    CHECK(u.order == expected);
}

TEST_CASE("random sort is seeded") {
    CHECK(sort_random(3, 4, 7) == sort_random(3, 4, 7));
    CHECK(sort_random(3, 4, 7).order != sort_random(3, 4, 8).order);
    const auto u = sort_random(5, 6, 1);
    CHECK(verify_order(u, 5, 6).ok());
}

TEST_CASE("random sort picks the first block uniformly") {
    std::vector<int> counts(4, 0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto first = sort_random(4, 4, seed).order.front();
        CHECK(first.iteration == 1);
        ++counts[first.weight];
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 250.0) * (c - 250.0) / 250.0;
    CHECK(chi2 < 16.27); // chi-square, 3 degrees of freedom, p = 0.001
}

TEST_CASE("verify_order detects layering and coverage problems") {
    UniversalStack u;
    u.strategy = SortStrategy::Average;
    u.order = refs({{0, 1}, {0, 2}, {1, 1}, {1, 2}});
    u.scores = {0, 0, 0, 0};
    auto report = verify_order(u, 2, 2);
    CHECK(report.count(Violation::Kind::Layering) == 1);
    CHECK(report.count(Violation::Kind::Monotonicity) == 0);

    u.strategy = SortStrategy::Greedy;
    CHECK(verify_order(u, 2, 2).ok());

    u.order = refs({{0, 1}, {0, 1}, {1, 1}});
    report = verify_order(u, 2, 2);
    CHECK(report.count(Violation::Kind::Coverage) == 3); // duplicate plus two missing

    u.order = refs({{0, 1}, {5, 1}});
    CHECK(verify_order(u, 2, 1).count(Violation::Kind::Coverage) == 2);
}

TEST_CASE("verify_order flags score inversions within an average round") {
    UniversalStack u;
    u.strategy = SortStrategy::Average;
    u.order = refs({{0, 1}, {1, 1}});
    u.scores = {2.0, 1.0};
    CHECK(verify_order(u, 2, 1).count(Violation::Kind::ScoreOrder) == 1);
}

TEST_CASE("monotonicity violations agree with a naive checker") {
    Rng rng(77);
    for (int t = 0; t < 300; ++t) {
        const std::size_t nw = 1 + rng.below(5), n = 1 + rng.below(5);
        UniversalStack u;
        u.strategy = SortStrategy::Random;
        for (std::size_t w = 0; w < nw; ++w)
            for (std::size_t i = 1; i <= n; ++i) u.order.push_back({w, static_cast<std::uint32_t>(i)});
        rng.shuffle(u.order.begin(), u.order.end());
        const auto report = verify_order(u, nw, n);
        std::vector<std::size_t> found;
        for (const auto& v : report.violations) {
            CHECK(v.kind == Violation::Kind::Monotonicity);
            found.push_back(v.position);
        }
        CHECK(found == naive_monotonicity(u.order));
    }
}

TEST_CASE("prefix spread agrees with a naive scan") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const std::size_t nw = 1 + rng.below(6), n = 1 + rng.below(6);
        std::vector<BlockRef> order = sort_random(nw, n, rng.next_u64()).order;
        CHECK(max_prefix_spread(order, nw) == naive_spread(order, nw));
    }
    const auto stacks = tiny_stacks({{0, "a"}, {0, "b"}, {1, "a"}, {1, "b"}}, 4);
    Rng scores(5);
    std::vector<double> noise(64);
    for (double& v : noise) v = scores.uniform();
    const auto u = sort_average(stacks, [&](const ModelView& v) {
        return noise[v.candidate->weight * 8 + v.candidate->iteration];
    });
    CHECK(max_prefix_spread(u.order, 4) <= 1);
    CHECK(verify_order(u, 4, 4).ok());
}

TEST_CASE("importance annotation follows the strategy") {
    auto stacks = tiny_stacks({{0, "a"}, {0, "b"}}, 2);
    const auto u = sort_average(stacks, [](const ModelView& v) {
        return static_cast<double>(v.candidate->weight * 10 + v.candidate->iteration);
    });
    annotate_importance(stacks, u);
    CHECK(stacks[1].blocks[1].importance == 12.0);
    annotate_importance(stacks, sort_random(2, 2, 1));
    CHECK_FALSE(stacks[1].blocks[1].importance.has_value());
}
