// bitstack: decompose a network into residual blocks, order them, and load
// the result at any byte budget.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bitstack/kernels.hpp"
#include "commands.hpp"

namespace {

using namespace bitstack;

struct SourceFlags {
    std::string weights;
    std::string calib;

    cli::Sources sources() const {
        cli::Sources s;
        if (!weights.empty()) s.weights_path = weights;
        if (!calib.empty()) s.calib_path = calib;
        return s;
    }
};

void add_source_flags(CLI::App* cmd, SourceFlags& flags) {
    cmd->add_option("--weights", flags.weights, "network file, required when the container was built from one");
    cmd->add_option("--calib", flags.calib, "calibration matrix file, required when the container was built from one");
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
    return out;
}

// Text outputs also go through a temporary so a failed run never leaves half a file.
template <typename Fn>
void write_text(const std::string& path, Fn&& fn) {
    const std::string tmp = path + ".tmp";
    {
        auto out = open_output(tmp);
        fn(out);
        out.flush();
        if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot rename " + tmp + ": " + ec.message());
}

int run(int argc, char** argv) {
    CLI::App app{"Budget-driven loading of weights stored as importance-ordered residual blocks."};
    app.require_subcommand(1);
    app.set_version_flag("--version", "bitstack 1.0");

    // decompose
    cli::RunConfig run_cfg;
    std::string precision = "half";
    std::string decompose_out;
    auto* decompose = app.add_subcommand("decompose", "scale and decompose every weight into residual blocks");
    decompose->add_option("--seed", run_cfg.seed, "seed of the reference network and calibration batch")
        ->capture_default_str();
    decompose->add_option("--iters", run_cfg.n_iters, "decomposition iterations per weight")->capture_default_str();
    decompose->add_option("--k", run_cfg.k, "rank of each residual block")->capture_default_str();
    decompose->add_option("--precision", precision, "factor storage: half or single")->capture_default_str();
    decompose->add_option("--layers", run_cfg.network.layers, "layers of the seeded network")->capture_default_str();
    decompose->add_option("--maps", run_cfg.network.maps, "linear maps per layer")->capture_default_str();
    decompose->add_option("--hidden", run_cfg.network.hidden, "residual stream width")->capture_default_str();
    decompose->add_option("--inner", run_cfg.network.inner, "width between maps, 0 for hidden")->capture_default_str();
    decompose->add_option("--calib-rows", run_cfg.calib_rows, "rows of the seeded calibration batch")
        ->capture_default_str();
    decompose->add_option("--sort-rows", run_cfg.sort_rows, "leading calibration rows used for sorting")
        ->capture_default_str();
    std::string weights_file, calib_file;
    decompose->add_option("--weights", weights_file, "network file (BNET) instead of a seeded network");
    decompose->add_option("--calib", calib_file, "calibration matrix file (BMAT) instead of a seeded batch");
    decompose->add_option("-o,--output", decompose_out, "container to write")->required();

    // sort
    std::string sort_in, sort_out, strategy = "average";
    std::uint64_t sort_seed = 0;
    SourceFlags sort_sources;
    auto* sort = app.add_subcommand("sort", "order the blocks of a container into a universal stack");
    sort->add_option("container", sort_in, "input container")->required()->check(CLI::ExistingFile);
    sort->add_option("--strategy", strategy, "average, greedy, random or unsorted")->capture_default_str();
    sort->add_option("--sort-seed", sort_seed, "seed for the random strategy")->capture_default_str();
    sort->add_option("-o,--output", sort_out, "container to write")->required();
    add_source_flags(sort, sort_sources);

    // load-eval
    std::string eval_in, budget_text;
    SourceFlags eval_sources;
    auto* load_eval = app.add_subcommand("load-eval", "load a container at a byte budget and score it");
    load_eval->add_option("container", eval_in, "sorted container")->required()->check(CLI::ExistingFile);
    load_eval->add_option("--budget", budget_text, "byte budget, e.g. 96KiB")->required();
    add_source_flags(load_eval, eval_sources);

    // sizes
    std::string sizes_in, sizes_csv, shape_text;
    std::size_t shape_k = 16;
    std::string shape_precision = "half";
    auto* sizes = app.add_subcommand("sizes", "residual block size per weight");
    sizes->add_option("container", sizes_in, "container to inspect")->check(CLI::ExistingFile);
    sizes->add_option("--shape", shape_text, "size a single MxN weight instead of a container");
    sizes->add_option("--k", shape_k, "rank used with --shape")->capture_default_str();
    sizes->add_option("--precision", shape_precision, "factor storage used with --shape")->capture_default_str();
    sizes->add_option("--csv", sizes_csv, "also write the table as CSV");

    // sweep
    std::string sweep_in, sweep_csv, sweep_plot, from_text, to_text, stride_text;
    std::size_t points = 50;
    SourceFlags sweep_sources;
    auto* sweep = app.add_subcommand("sweep", "score the model over a range of budgets");
    sweep->add_option("container", sweep_in, "sorted container")->required()->check(CLI::ExistingFile);
    sweep->add_option("--points", points, "evenly spaced budgets up to the full size")->capture_default_str();
    sweep->add_option("--from", from_text, "first budget (with --stride)");
    sweep->add_option("--to", to_text, "last budget (with --stride), default full size");
    sweep->add_option("--stride", stride_text, "budget step, replaces --points");
    sweep->add_option("--csv", sweep_csv, "CSV output, default stdout");
    sweep->add_option("--gnuplot", sweep_plot, "also write a gnuplot script for the CSV");
    add_source_flags(sweep, sweep_sources);

    // verify
    std::string verify_in;
    auto* verify = app.add_subcommand("verify", "check a container's structure and order invariants");
    verify->add_option("container", verify_in, "container to check")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitUsage;
    }

    kernels::configure_threads_from_env();

    if (*decompose) {
        run_cfg.precision = parse_precision(precision);
        if (!weights_file.empty()) run_cfg.weights_path = weights_file;
        if (!calib_file.empty()) run_cfg.calib_path = calib_file;
        const auto artifacts = cli::cmd_decompose(run_cfg);
        store::write_file(decompose_out, artifacts);
        std::cout << "wrote " << decompose_out << ": " << artifacts.model.n_weights() << " weights, "
                  << artifacts.model.order.order.size() << " blocks\n";
    } else if (*sort) {
        auto artifacts = store::read_file(sort_in);
        cli::cmd_sort(artifacts, stack::parse_strategy(strategy), sort_seed, sort_sources.sources());
        store::write_file(sort_out, artifacts);
        std::cout << "wrote " << sort_out << ": " << stack::strategy_name(artifacts.config.strategy) << " order\n";
    } else if (*load_eval) {
        const auto artifacts = store::read_file(eval_in);
        const auto report = cli::cmd_load_eval(artifacts, cli::parse_bytes(budget_text), eval_sources.sources());
        cli::print_load_report(std::cout, report);
    } else if (*sizes) {
        std::vector<cli::SizeRow> rows;
        if (!shape_text.empty()) {
            const auto [m, n] = cli::parse_shape(shape_text);
            rows.push_back(cli::size_row(shape_text, m, n, shape_k, parse_precision(shape_precision)));
        } else if (!sizes_in.empty()) {
            rows = cli::cmd_sizes(store::read_file(sizes_in));
        } else {
            throw Error(ErrorCode::BadConfig, "sizes needs a container or --shape");
        }
        cli::print_size_table(std::cout, rows);
        if (!sizes_csv.empty()) write_text(sizes_csv, [&](std::ostream& o) { cli::write_size_csv(o, rows); });
    } else if (*sweep) {
        const auto artifacts = store::read_file(sweep_in);
        const auto full = harness::full_model_bytes(artifacts.model);
        std::vector<std::uint64_t> budgets;
        if (!stride_text.empty()) {
            const auto from = from_text.empty() ? 0 : cli::parse_bytes(from_text);
            const auto to = to_text.empty() ? full : cli::parse_bytes(to_text);
            budgets = harness::stride_grid(from, to, cli::parse_bytes(stride_text));
        } else {
            if (!from_text.empty() || !to_text.empty())
                throw Error(ErrorCode::BadConfig, "--from and --to need --stride");
            if (points == 0) throw Error(ErrorCode::BadConfig, "--points must be at least 1");
            budgets = harness::sweep_grid(full, points);
        }
        const auto rows = cli::cmd_sweep(artifacts, budgets, sweep_sources.sources());
        if (sweep_csv.empty()) {
            harness::write_sweep_csv(std::cout, rows);
        } else {
            write_text(sweep_csv, [&](std::ostream& o) { harness::write_sweep_csv(o, rows); });
        }
        if (!sweep_plot.empty()) {
            const std::string data = sweep_csv.empty() ? "sweep.csv" : sweep_csv;
            write_text(sweep_plot, [&](std::ostream& o) { cli::write_gnuplot_script(o, data); });
        }
    } else if (*verify) {
        const auto report = cli::cmd_verify(store::read_file(verify_in));
        cli::print_verify_report(std::cout, report);
        if (!report.ok()) return cli::kExitVerifyFailed;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const bitstack::Error& e) {
        std::cerr << "error: " << e.code_name() << ": " << e.what() << '\n';
        return bitstack::cli::exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: Internal: " << e.what() << '\n';
        return 1;
    }
}
