#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <memory>
#include <ostream>

#include "bitstack/block_size.hpp"

namespace bitstack::cli {

namespace {

std::uint32_t narrow(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw Error(ErrorCode::BadConfig, std::string(what) + " does not fit the container header");
    return static_cast<std::uint32_t>(v);
}

std::uint64_t parse_count(std::string_view digits, std::string_view whole) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{} || ptr != digits.data() + digits.size())
        throw Error(ErrorCode::BadConfig, "not a byte count: '" + std::string(whole) + "'");
    return v;
}

} // namespace

void RunConfig::validate() const {
    if (n_iters == 0) throw Error(ErrorCode::BadConfig, "--iters must be at least 1");
    if (k == 0) throw Error(ErrorCode::BadConfig, "--k must be at least 1");
    if (!weights_path) network.validate();
    if (!calib_path && calib_rows == 0) throw Error(ErrorCode::BadConfig, "--calib-rows must be at least 1");
    if (sort_rows == 0) throw Error(ErrorCode::BadConfig, "--sort-rows must be at least 1");
    narrow(n_iters, "--iters");
    narrow(k, "--k");
}

std::uint64_t calibration_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ull; }

Environment environment(const store::ContainerConfig& config, const Sources& sources) {
    harness::NetworkConfig net_cfg{config.layers, config.maps, config.hidden, config.inner};
    Environment env{{}, {}};
    if (config.model_source == store::Source::External) {
        if (!sources.weights_path)
            throw Error(ErrorCode::BadConfig, "container was built from a weight file; pass --weights");
        env.network = harness::load_network(*sources.weights_path);
        if (env.network.config != net_cfg)
            throw Error(ErrorCode::ShapeMismatch, "weight file does not match the container's network");
    } else {
        env.network = harness::build_reference_network(net_cfg, config.seed);
    }
    if (config.calib_source == store::Source::External) {
        if (!sources.calib_path)
            throw Error(ErrorCode::BadConfig, "container was built from a calibration file; pass --calib");
        env.calib = harness::load_matrix(*sources.calib_path);
        if (env.calib.rows() != config.calib_rows || env.calib.cols() != config.hidden)
            throw Error(ErrorCode::ShapeMismatch, "calibration file does not match the container");
    } else {
        env.calib = harness::generate_calibration(config.hidden, config.calib_rows, calibration_seed(config.seed));
    }
    return env;
}

store::Artifacts cmd_decompose(const RunConfig& config) {
    config.validate();
    const auto network = config.weights_path ? harness::load_network(*config.weights_path)
                                             : harness::build_reference_network(config.network, config.seed);
    const auto& net_cfg = network.config;
    const auto calib =
        config.calib_path ? harness::load_matrix(*config.calib_path)
                          : harness::generate_calibration(net_cfg.hidden, config.calib_rows, calibration_seed(config.seed));
    if (calib.cols() != net_cfg.hidden)
        throw Error(ErrorCode::ShapeMismatch, "calibration width " + std::to_string(calib.cols()) +
                                                  " != hidden " + std::to_string(net_cfg.hidden));

    store::Artifacts out;
    auto& c = out.config;
    c.precision = config.precision;
    c.strategy = stack::SortStrategy::Unsorted;
    c.model_source = config.weights_path ? store::Source::External : store::Source::Seeded;
    c.calib_source = config.calib_path ? store::Source::External : store::Source::Seeded;
    c.n_iters = narrow(config.n_iters, "--iters");
    c.k = narrow(config.k, "--k");
    c.layers = narrow(net_cfg.layers, "layers");
    c.maps = narrow(net_cfg.maps, "maps");
    c.hidden = narrow(net_cfg.hidden, "hidden");
    c.inner = narrow(net_cfg.inner, "inner");
    c.calib_rows = narrow(calib.rows(), "calibration rows");
    c.sort_rows = narrow(std::min(config.sort_rows, calib.rows()), "--sort-rows");
    c.seed = config.seed;
    c.sort_seed = 0;
    out.model = harness::compress_network(network, calib, config.n_iters, config.k, config.precision);
    return out;
}

void cmd_sort(store::Artifacts& artifacts, stack::SortStrategy strategy, std::uint64_t sort_seed,
              const Sources& sources) {
    auto& c = artifacts.config;
    if (strategy == stack::SortStrategy::Average || strategy == stack::SortStrategy::Greedy) {
        const auto env = environment(c, sources);
        harness::sort_model(artifacts.model, strategy, env.network, harness::head_rows(env.calib, c.sort_rows),
                            sort_seed);
    } else {
        harness::sort_model(artifacts.model, strategy, harness::ReferenceNetwork{}, DenseMatrix{}, sort_seed);
    }
    c.strategy = strategy;
    c.sort_seed = strategy == stack::SortStrategy::Random ? sort_seed : 0;
}

LoadReport cmd_load_eval(const store::Artifacts& artifacts, std::uint64_t budget_bytes, const Sources& sources) {
    const auto env = environment(artifacts.config, sources);
    const auto& model = artifacts.model;
    const std::uint64_t full = harness::full_model_bytes(model);
    const auto rows = harness::budget_sweep(model, env.network, env.calib, std::vector<std::uint64_t>{0, budget_bytes});

    LoadReport r;
    r.budget_bytes = budget_bytes;
    r.loaded_bytes = rows[1].loaded_bytes;
    r.full_bytes = full;
    r.prefix_len = rows[1].prefix_len;
    r.n_blocks = model.order.order.size();
    r.degenerate = rows[1].degenerate;
    r.score = rows[1].eval_score;
    r.baseline_score = rows[0].eval_score;
    r.levels = rows[1].levels;
    for (const auto& s : model.stacks) r.ids.push_back(s.weight);
    return r;
}

void print_load_report(std::ostream& out, const LoadReport& r) {
    out << fmt::format("budget_bytes {}\nloaded_bytes {}\nfull_bytes {}\nblocks {}/{}\ndegenerate {}\n",
                       r.budget_bytes, r.loaded_bytes, r.full_bytes, r.prefix_len, r.n_blocks,
                       r.degenerate ? "true" : "false");
    out << fmt::format("score {:.17g}\nbaseline_score {:.17g}\n", r.score, r.baseline_score);
    for (std::size_t w = 0; w < r.ids.size(); ++w) out << fmt::format("level {} {}\n", r.ids[w].str(), r.levels[w]);
}

double round_mib(double mib) { return std::round(mib * 100.0) / 100.0; }

SizeRow size_row(std::string name, std::size_t rows, std::size_t cols, std::size_t k, Precision precision) {
    SizeRow r;
    r.name = std::move(name);
    r.rows = rows;
    r.cols = cols;
    r.k = k;
    r.bits = loader::block_size_bits(rows, cols, k, precision);
    r.bytes = loader::block_size_bytes(r.bits);
    r.mib = static_cast<double>(r.bits) / 8.0 / static_cast<double>(loader::kMiB);
    return r;
}

std::vector<SizeRow> cmd_sizes(const store::Artifacts& artifacts) {
    std::vector<SizeRow> rows;
    for (const auto& s : artifacts.model.stacks) {
        if (s.blocks.empty()) continue;
        const auto& b = s.blocks.front();
        rows.push_back(size_row(s.weight.str(), b.rows(), b.cols(), b.rank(), artifacts.model.precision));
    }
    return rows;
}

void print_size_table(std::ostream& out, const std::vector<SizeRow>& rows) {
    out << fmt::format("{:<16} {:>8} {:>8} {:>4} {:>14} {:>12} {:>9}\n", "weight", "m", "n", "k", "bits", "bytes", "MiB");
    for (const auto& r : rows)
        out << fmt::format("{:<16} {:>8} {:>8} {:>4} {:>14} {:>12} {:>9.2f}\n", r.name, r.rows, r.cols, r.k, r.bits,
                           r.bytes, round_mib(r.mib));
}

void write_size_csv(std::ostream& out, const std::vector<SizeRow>& rows) {
    out << "weight,m,n,k,bits,bytes,mib\n";
    for (const auto& r : rows)
        out << fmt::format("{},{},{},{},{},{},{:.17g}\n", r.name, r.rows, r.cols, r.k, r.bits, r.bytes, r.mib);
}

std::vector<harness::SweepRow> cmd_sweep(const store::Artifacts& artifacts, const std::vector<std::uint64_t>& budgets,
                                         const Sources& sources) {
    const auto env = environment(artifacts.config, sources);
    return harness::budget_sweep(artifacts.model, env.network, env.calib, budgets);
}

void write_gnuplot_script(std::ostream& out, const std::string& csv_path) {
    out << "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set xlabel 'budget (MiB)'\n"
           "set ylabel 'surrogate score'\n"
           "set logscale y\n"
           "set grid\n";
    out << "plot '" << csv_path << "' using ($1/1048576.0):5 with linespoints title 'eval_score'\n";
}

VerifyReport cmd_verify(const store::Artifacts& artifacts) {
    const auto& model = artifacts.model;
    const auto& c = artifacts.config;
    VerifyReport r;
    r.n_weights = model.n_weights();
    r.n_iters = model.n_iters();
    for (const auto& s : model.stacks) {
        r.n_blocks += s.blocks.size();
        try {
            avd::validate(s, model.precision);
        } catch (const Error& e) {
            r.problems.push_back(s.weight.str() + ": " + e.what());
        }
        if (s.n_iters() != c.n_iters)
            r.problems.push_back(s.weight.str() + ": " + std::to_string(s.n_iters()) + " blocks, header says " +
                                 std::to_string(c.n_iters));
        for (const auto& b : s.blocks)
            if (b.rank() != avd::effective_rank(b.rows(), b.cols(), c.k)) {
                r.problems.push_back(s.weight.str() + ": block rank differs from the header's k");
                break;
            }
    }
    if (c.model_source == store::Source::Seeded && model.n_weights() != std::size_t{c.layers} * c.maps)
        r.problems.push_back("weight count does not match layers x maps");
    if (model.order.strategy != c.strategy) r.problems.push_back("order strategy differs from the header");
    r.order = stack::verify_order(model.order, model.n_weights(), model.n_iters());
    return r;
}

void print_verify_report(std::ostream& out, const VerifyReport& r) {
    out << fmt::format("weights {}\niterations {}\nblocks {}\n", r.n_weights, r.n_iters, r.n_blocks);
    for (const auto& p : r.problems) out << "problem " << p << '\n';
    for (const auto& v : r.order.violations) out << "violation at " << v.position << ": " << v.message << '\n';
    out << (r.ok() ? "ok\n" : "FAILED\n");
}

std::uint64_t parse_bytes(std::string_view text) {
    const auto split = text.find_first_not_of("0123456789.");
    const std::string_view number = text.substr(0, split);
    const std::string_view suffix = split == std::string_view::npos ? std::string_view{} : text.substr(split);
    if (number.empty()) throw Error(ErrorCode::BadConfig, "not a byte count: '" + std::string(text) + "'");

    std::uint64_t unit = 0;
    if (suffix.empty() || suffix == "B") unit = 1;
    else if (suffix == "KiB") unit = 1ull << 10;
    else if (suffix == "MiB") unit = 1ull << 20;
    else if (suffix == "GiB") unit = 1ull << 30;
    else
        throw Error(ErrorCode::BadConfig, "unknown byte unit '" + std::string(suffix) + "' (use B, KiB, MiB or GiB)");

    if (number.find('.') == std::string_view::npos) {
        const auto v = parse_count(number, text);
        if (v > UINT64_MAX / unit) throw Error(ErrorCode::BadConfig, "byte count out of range");
        return v * unit;
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
    if (ec != std::errc{} || ptr != number.data() + number.size())
        throw Error(ErrorCode::BadConfig, "not a byte count: '" + std::string(text) + "'");
    const double bytes = std::floor(v * static_cast<double>(unit));
    if (!(bytes < 1.8e19)) throw Error(ErrorCode::BadConfig, "byte count out of range");
    return static_cast<std::uint64_t>(bytes);
}

std::pair<std::size_t, std::size_t> parse_shape(std::string_view text) {
    const auto x = text.find_first_of("xX");
    if (x == std::string_view::npos) throw Error(ErrorCode::BadConfig, "shape must look like 4096x1024");
    const auto m = parse_count(text.substr(0, x), text);
    const auto n = parse_count(text.substr(x + 1), text);
    if (m == 0 || n == 0) throw Error(ErrorCode::BadConfig, "shape dimensions must be positive");
    return {m, n};
}

int exit_code(ErrorCode code) { return 10 + static_cast<int>(code); }

} // namespace bitstack::cli
