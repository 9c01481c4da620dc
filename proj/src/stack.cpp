#include "bitstack/stack.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <queue>

#include "bitstack/rng.hpp"

namespace bitstack::stack {

std::string_view strategy_name(SortStrategy s) {
    switch (s) {
    case SortStrategy::Unsorted: return "unsorted";
    case SortStrategy::Average: return "average";
    case SortStrategy::Greedy: return "greedy";
    case SortStrategy::Random: return "random";
    }
    return "unknown";
}

SortStrategy parse_strategy(std::string_view name) {
    if (name == "average") return SortStrategy::Average;
    if (name == "greedy") return SortStrategy::Greedy;
    if (name == "random") return SortStrategy::Random;
    if (name == "unsorted") return SortStrategy::Unsorted;
    throw Error(ErrorCode::BadConfig, "unknown sort strategy '" + std::string(name) + "'");
}

namespace {

std::size_t common_depth(std::span<const avd::WeightStack> stacks) {
    if (stacks.empty()) return 0;
    const std::size_t n = stacks.front().n_iters();
    for (const auto& s : stacks)
        if (s.n_iters() != n)
            throw Error(ErrorCode::InvalidArgument, "weight stacks have different depths (" +
                                                        std::to_string(n) + " vs " +
                                                        std::to_string(s.n_iters()) + ")");
    return n;
}

// prefix[w][t] = reconstruction of weight w at level t, summed in iteration order.
std::vector<std::vector<DenseMatrix>> prefix_sums(std::span<const avd::WeightStack> stacks,
                                                  std::size_t upto) {
    std::vector<std::vector<DenseMatrix>> prefix(stacks.size());
    const auto count = static_cast<std::ptrdiff_t>(stacks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ww = 0; ww < count; ++ww) {
        const auto w = static_cast<std::size_t>(ww);
        const auto& s = stacks[w];
        auto& levels = prefix[w];
        levels.reserve(upto + 1);
        levels.emplace_back(s.rows(), s.cols());
        for (std::size_t t = 1; t <= upto; ++t) levels.push_back(levels.back() + avd::restore(s.blocks[t - 1]));
    }
    return prefix;
}

struct Candidate {
    BlockRef ref;
    std::vector<std::size_t> levels;
    std::vector<const DenseMatrix*> weights;
};

// Scores all candidates (in parallel); rethrows the first failure in candidate order.
std::vector<double> score_all(std::vector<Candidate>& candidates, const Evaluator& eval,
                              std::span<const avd::WeightStack> stacks) {
    std::vector<double> scores(candidates.size(), 0.0);
    std::vector<std::exception_ptr> failures(candidates.size());
    const auto count = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t cc = 0; cc < count; ++cc) {
        const auto c = static_cast<std::size_t>(cc);
        try {
            const ModelView view{candidates[c].levels, candidates[c].weights, candidates[c].ref};
            scores[c] = eval(view);
        } catch (...) {
            failures[c] = std::current_exception();
        }
    }
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& id = stacks[candidates[c].ref.weight].weight;
        const std::string where = "evaluator failed on " + id.str() + " block " +
                                  std::to_string(candidates[c].ref.iteration);
        if (failures[c]) {
            try {
                std::rethrow_exception(failures[c]);
            } catch (const std::exception& e) {
                throw Error(ErrorCode::EvaluatorFailure, where + ": " + e.what());
            } catch (...) {
                throw Error(ErrorCode::EvaluatorFailure, where);
            }
        }
        if (!std::isfinite(scores[c])) throw Error(ErrorCode::EvaluatorFailure, where + ": non-finite score");
    }
    return scores;
}

// Ascending score, ties by WeightId then index.
bool ranks_before(double score_a, std::size_t a, double score_b, std::size_t b,
                  std::span<const avd::WeightStack> stacks) {
    if (score_a != score_b) return score_a < score_b;
    if (stacks[a].weight != stacks[b].weight) return stacks[a].weight < stacks[b].weight;
    return a < b;
}

} // namespace

UniversalStack unsorted_order(std::size_t n_weights, std::size_t n_iters) {
    UniversalStack u;
    u.strategy = SortStrategy::Unsorted;
    for (std::size_t i = 1; i <= n_iters; ++i)
        for (std::size_t w = 0; w < n_weights; ++w) u.order.push_back({w, static_cast<std::uint32_t>(i)});
    u.scores.assign(u.order.size(), 0.0);
    return u;
}

UniversalStack sort_average(std::span<const avd::WeightStack> stacks, const Evaluator& eval) {
    const std::size_t n = common_depth(stacks);
    const std::size_t n_weights = stacks.size();
    UniversalStack u;
    u.strategy = SortStrategy::Average;
    if (n_weights == 0) return u;

    // base[w] holds weight w at level i-1; advanced once per round.
    std::vector<DenseMatrix> base;
    base.reserve(n_weights);
    for (const auto& s : stacks) base.emplace_back(s.rows(), s.cols());

    for (std::size_t i = 1; i <= n; ++i) {
        std::vector<DenseMatrix> loaded(n_weights);
        const auto count = static_cast<std::ptrdiff_t>(n_weights);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t ww = 0; ww < count; ++ww) {
            const auto w = static_cast<std::size_t>(ww);
            loaded[w] = base[w] + avd::restore(stacks[w].blocks[i - 1]);
        }

        std::vector<Candidate> candidates(n_weights);
        for (std::size_t w = 0; w < n_weights; ++w) {
            auto& c = candidates[w];
            c.ref = {w, static_cast<std::uint32_t>(i)};
            c.levels.assign(n_weights, i - 1);
            c.levels[w] = i;
            c.weights.resize(n_weights);
            for (std::size_t v = 0; v < n_weights; ++v) c.weights[v] = &base[v];
            c.weights[w] = &loaded[w];
        }
        const auto scores = score_all(candidates, eval, stacks);

        std::vector<std::size_t> round(n_weights);
        std::iota(round.begin(), round.end(), std::size_t{0});
        std::sort(round.begin(), round.end(), [&](std::size_t a, std::size_t b) {
            return ranks_before(scores[a], a, scores[b], b, stacks);
        });
        for (std::size_t w : round) {
            u.order.push_back({w, static_cast<std::uint32_t>(i)});
            u.scores.push_back(scores[w]);
        }
        base = std::move(loaded);
    }
    return u;
}

UniversalStack sort_greedy(std::span<const avd::WeightStack> stacks, const Evaluator& eval) {
    const std::size_t n = common_depth(stacks);
    const std::size_t n_weights = stacks.size();
    UniversalStack u;
    u.strategy = SortStrategy::Greedy;
    if (n_weights == 0) return u;

    const std::size_t frozen = n / 2;
    const auto prefix = prefix_sums(stacks, n);

    std::vector<Candidate> candidates;
    candidates.reserve(n_weights * n);
    for (std::size_t w = 0; w < n_weights; ++w)
        for (std::size_t t = 1; t <= n; ++t) {
            Candidate c;
            c.ref = {w, static_cast<std::uint32_t>(t)};
            c.levels.assign(n_weights, frozen);
            c.levels[w] = t;
            c.weights.resize(n_weights);
            for (std::size_t v = 0; v < n_weights; ++v) c.weights[v] = &prefix[v][frozen];
            c.weights[w] = &prefix[w][t];
            candidates.push_back(std::move(c));
        }
    const auto scores = score_all(candidates, eval, stacks);
    auto score_of = [&](std::size_t w, std::size_t t) { return scores[w * n + (t - 1)]; };

    // Kahn's algorithm over the per-weight chains, lowest score first.
    std::vector<std::size_t> next(n_weights, 1);
    auto cmp = [&](std::size_t a, std::size_t b) {
        // priority_queue pops the largest, so invert
        return ranks_before(score_of(b, next[b]), b, score_of(a, next[a]), a, stacks);
    };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heads(cmp);
    for (std::size_t w = 0; w < n_weights; ++w) heads.push(w);
    while (!heads.empty()) {
        const std::size_t w = heads.top();
        heads.pop();
        u.order.push_back({w, static_cast<std::uint32_t>(next[w])});
        u.scores.push_back(score_of(w, next[w]));
        if (++next[w] <= n) heads.push(w);
    }
    return u;
}

UniversalStack sort_random(std::size_t n_weights, std::size_t n_iters, std::uint64_t seed) {
    std::vector<std::size_t> owners;
    owners.reserve(n_weights * n_iters);
    for (std::size_t w = 0; w < n_weights; ++w) owners.insert(owners.end(), n_iters, w);
    Rng rng(seed);
    rng.shuffle(owners.begin(), owners.end());

    UniversalStack u;
    u.strategy = SortStrategy::Random;
    std::vector<std::uint32_t> next(n_weights, 1);
    for (std::size_t w : owners) u.order.push_back({w, next[w]++});
    u.scores.assign(u.order.size(), 0.0);
    return u;
}

void annotate_importance(std::span<avd::WeightStack> stacks, const UniversalStack& u) {
    for (auto& s : stacks)
        for (auto& b : s.blocks) b.importance.reset();
    if (u.strategy != SortStrategy::Average && u.strategy != SortStrategy::Greedy) return;
    for (std::size_t i = 0; i < u.order.size() && i < u.scores.size(); ++i) {
        const auto& ref = u.order[i];
        if (ref.weight < stacks.size() && ref.iteration >= 1 && ref.iteration <= stacks[ref.weight].blocks.size())
            stacks[ref.weight].blocks[ref.iteration - 1].importance = u.scores[i];
    }
}

std::size_t OrderReport::count(Violation::Kind kind) const {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [&](const Violation& v) { return v.kind == kind; }));
}

OrderReport verify_order(const UniversalStack& u, std::size_t n_weights, std::size_t n_iters) {
    OrderReport report;
    auto add = [&](Violation::Kind kind, std::size_t pos, std::string msg) {
        report.violations.push_back({kind, pos, std::move(msg)});
    };

    std::vector<std::vector<int>> seen(n_weights, std::vector<int>(n_iters + 1, 0));
    std::vector<std::uint32_t> highest(n_weights, 0);
    std::uint32_t layer = 0;
    const bool average = u.strategy == SortStrategy::Average;
    const bool has_scores = u.scores.size() == u.order.size();

    for (std::size_t pos = 0; pos < u.order.size(); ++pos) {
        const auto& ref = u.order[pos];
        const std::string where = "position " + std::to_string(pos) + " (weight " +
                                  std::to_string(ref.weight) + ", iteration " +
                                  std::to_string(ref.iteration) + ")";
        if (ref.weight >= n_weights || ref.iteration < 1 || ref.iteration > n_iters) {
            add(Violation::Kind::Coverage, pos, where + ": reference out of range");
            continue;
        }
        if (seen[ref.weight][ref.iteration]++ > 0)
            add(Violation::Kind::Coverage, pos, where + ": duplicate reference");
        if (ref.iteration < highest[ref.weight])
            add(Violation::Kind::Monotonicity, pos,
                where + ": follows iteration " + std::to_string(highest[ref.weight]) + " of the same weight");
        highest[ref.weight] = std::max(highest[ref.weight], ref.iteration);

        if (average) {
            if (ref.iteration < layer)
                add(Violation::Kind::Layering, pos,
                    where + ": placed after a block of iteration " + std::to_string(layer));
            else if (has_scores && pos > 0 && ref.iteration == u.order[pos - 1].iteration &&
                     u.scores[pos] < u.scores[pos - 1])
                add(Violation::Kind::ScoreOrder, pos, where + ": score below its predecessor's");
            layer = std::max(layer, ref.iteration);
        }
    }
    for (std::size_t w = 0; w < n_weights; ++w)
        for (std::size_t i = 1; i <= n_iters; ++i)
            if (seen[w][i] == 0)
                add(Violation::Kind::Coverage, u.order.size(),
                    "missing weight " + std::to_string(w) + " iteration " + std::to_string(i));
    return report;
}

std::size_t max_prefix_spread(std::span<const BlockRef> order, std::size_t n_weights) {
    if (n_weights == 0) return 0;
    std::vector<std::size_t> level(n_weights, 0);
    // count of weights at each level, to track min and max incrementally
    std::vector<std::size_t> at_level(order.size() + 2, 0);
    at_level[0] = n_weights;
    std::size_t lo = 0, hi = 0, spread = 0;
    for (const auto& ref : order) {
        if (ref.weight >= n_weights) continue;
        const std::size_t old = level[ref.weight]++;
        --at_level[old];
        ++at_level[old + 1];
        hi = std::max(hi, old + 1);
        while (at_level[lo] == 0) ++lo;
        spread = std::max(spread, hi - lo);
    }
    return spread;
}

} // namespace bitstack::stack
