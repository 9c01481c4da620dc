#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "oracles.hpp"

using namespace bitstack;
using namespace bitstack::cli;

namespace {

RunConfig small_config() {
    RunConfig c;
    c.seed = 1;
    c.n_iters = 4;
    c.k = 3;
    c.network = {2, 2, 12, 0};
    c.calib_rows = 40;
    c.sort_rows = 16;
    return c;
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

TEST_CASE("decompose records an unsorted container that round-trips") {
    const auto a = cmd_decompose(small_config());
    CHECK(a.config.strategy == stack::SortStrategy::Unsorted);
    CHECK(a.model.order.order.size() == 4 * 4);
    CHECK(store::deserialize(store::serialize(a)) == a);
    CHECK(cmd_verify(a).ok());
}

TEST_CASE("one iteration gives one block per weight") {
    auto cfg = small_config();
    cfg.n_iters = 1;
    cfg.network = {3, 2, 8, 0};
    const auto a = cmd_decompose(cfg);
    CHECK(a.model.order.order.size() == 6);
}

TEST_CASE("decompose and sort are deterministic") {
    auto once = [] {
        auto a = cmd_decompose(small_config());
        cmd_sort(a, stack::SortStrategy::Average, 0);
        return store::serialize(a);
    };
    CHECK(once() == once());
}

TEST_CASE("sorted containers verify for every strategy") {
    for (auto s : {stack::SortStrategy::Average, stack::SortStrategy::Greedy, stack::SortStrategy::Random,
                   stack::SortStrategy::Unsorted}) {
        auto a = cmd_decompose(small_config());
        cmd_sort(a, s, 9);
        CHECK(a.config.strategy == s);
        const auto b = store::deserialize(store::serialize(a));
        const auto report = cmd_verify(b);
        CHECK(report.ok());
        CHECK(report.n_blocks == 16);
    }
}

TEST_CASE("load-eval reports") {
    auto a = cmd_decompose(small_config());
    cmd_sort(a, stack::SortStrategy::Average, 0);
    const auto empty = cmd_load_eval(a, 0);
    CHECK(empty.degenerate);
    CHECK(empty.prefix_len == 0);
    CHECK(empty.score == empty.baseline_score);

    const auto full = cmd_load_eval(a, harness::full_model_bytes(a.model));
    CHECK_FALSE(full.degenerate);
    CHECK(full.prefix_len == 16);
    CHECK(full.score < 1e-2 * full.baseline_score);

    // same numbers as the library path
    const auto env = environment(a.config, {});
    loader::LoadedModel loaded(std::make_shared<const loader::CompressedModel>(a.model));
    const std::uint64_t budget = harness::full_model_bytes(a.model) / 3;
    loaded = loader::load_budget(loaded, budget).first;
    const double expected = harness::mean_squared_error(harness::forward(env.network, env.calib),
                                                        harness::forward(env.network.config, loaded, env.calib));
    const auto mid = cmd_load_eval(a, budget);
    CHECK(mid.score == expected);
    CHECK(mid.levels == loaded.plan().per_weight_level);

    std::ostringstream out;
    print_load_report(out, mid);
    CHECK(out.str().find("level 1.lin1 ") != std::string::npos);
}

TEST_CASE("external weight and calibration files") {
    const auto dir = std::filesystem::temp_directory_path() / "bitstack_cli_test";
    std::filesystem::create_directories(dir);
    const auto net = harness::build_reference_network({2, 1, 6, 0}, 77);
    const auto calib = harness::generate_calibration(6, 20, 78);
    harness::save_network((dir / "w.bnet").string(), net);
    harness::save_matrix((dir / "x.bmat").string(), calib);

    RunConfig cfg;
    cfg.n_iters = 3;
    cfg.k = 2;
    cfg.sort_rows = 8;
    cfg.weights_path = (dir / "w.bnet").string();
    cfg.calib_path = (dir / "x.bmat").string();
    auto a = cmd_decompose(cfg);
    CHECK(a.config.model_source == store::Source::External);
    CHECK(a.config.calib_rows == 20);
    CHECK(a.model == harness::compress_network(net, calib, 3, 2, Precision::Half));

    CHECK(code_of([&] { cmd_sort(a, stack::SortStrategy::Average, 0); }) == ErrorCode::BadConfig);
    const Sources sources{cfg.weights_path, cfg.calib_path};
    cmd_sort(a, stack::SortStrategy::Average, 0, sources);
    CHECK(cmd_load_eval(a, 1 << 20, sources).score < 1e-2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("size table rows") {
    CHECK(round_mib(size_row("q", 4096, 4096, 16, Precision::Half).mib) == 2.25);
    CHECK(round_mib(size_row("k", 4096, 1024, 16, Precision::Half).mib) == 0.66);
    CHECK(round_mib(size_row("down", 8192, 28672, 16, Precision::Half).mib) == 29.13);
    const auto a = cmd_decompose(small_config());
    const auto rows = cmd_sizes(a);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].bits == 12 * 12 + 16 * 3 * 24);
    CHECK(rows[0].bytes == (rows[0].bits + 7) / 8);
    std::ostringstream table, csv;
    print_size_table(table, {size_row("x", 8192, 28672, 16, Precision::Half)});
    CHECK(table.str().find("29.13") != std::string::npos);
    write_size_csv(csv, rows);
    CHECK(csv.str().rfind("weight,m,n,k,bits,bytes,mib\n0.lin0,12,12,3,", 0) == 0);
}

TEST_CASE("verify finds damage") {
    auto a = cmd_decompose(small_config());
    cmd_sort(a, stack::SortStrategy::Average, 0);
    auto bad = a;
    std::swap(bad.model.order.order[0], bad.model.order.order[5]);
    CHECK_FALSE(cmd_verify(bad).ok());
    bad = a;
    bad.config.k = 7;
    CHECK_FALSE(cmd_verify(bad).ok());
}

TEST_CASE("byte counts and shapes") {
    CHECK(parse_bytes("0") == 0);
    CHECK(parse_bytes("4096") == 4096);
    CHECK(parse_bytes("12B") == 12);
    CHECK(parse_bytes("3KiB") == 3072);
    CHECK(parse_bytes("1.5MiB") == 1572864);
    CHECK(parse_bytes("2GiB") == 2147483648ull);
    for (const char* bad : {"", "MiB", "10MB", "1.2.3KiB", "-5", "10 KiB", "99999999999999999999GiB"})
        CHECK(code_of([&] { parse_bytes(bad); }) == ErrorCode::BadConfig);
    CHECK(parse_shape("4096x1024") == std::pair<std::size_t, std::size_t>{4096, 1024});
    CHECK(code_of([] { parse_shape("4096"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_shape("0x4"); }) == ErrorCode::BadConfig);
}

TEST_CASE("run configuration validation") {
    auto cfg = small_config();
    cfg.n_iters = 0;
    CHECK(code_of([&] { cmd_decompose(cfg); }) == ErrorCode::BadConfig);
    cfg = small_config();
    cfg.network.layers = 0;
    CHECK(code_of([&] { cmd_decompose(cfg); }) == ErrorCode::BadConfig);
    CHECK(exit_code(ErrorCode::BadConfig) == 26);
    CHECK(exit_code(ErrorCode::InvalidArgument) == 11);
}
