#include <benchmark/benchmark.h>

#include "bitstack/harness.hpp"
#include "bitstack/kernels.hpp"
#include "bitstack/rng.hpp"

using namespace bitstack;

namespace {

std::vector<std::uint8_t> random_bits(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> bits((count + 7) / 8);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(256));
    return bits;
}

template <bool Parallel>
void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const DenseMatrix a = Rng(1).gaussian(n, n), b = Rng(2).gaussian(n, n);
    for (auto _ : state) {
        auto c = Parallel ? kernels::matmul(a, b) : kernels::reference::matmul(a, b);
        benchmark::DoNotOptimize(c);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void bm_signed_outer(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t k = 16;
    const DenseMatrix left = Rng(3).gaussian(n, k), right = Rng(4).gaussian(n, k);
    const auto bits = random_bits(n * n, 5);
    for (auto _ : state) {
        auto c = Parallel ? kernels::signed_outer(bits, left, right)
                          : kernels::reference::signed_outer(bits, left, right);
        benchmark::DoNotOptimize(c);
    }
}

template <bool Parallel>
void bm_compress_network(benchmark::State& state) {
    const harness::NetworkConfig cfg{4, 2, static_cast<std::size_t>(state.range(0)), 0};
    const auto net = harness::build_reference_network(cfg, 1);
    const auto calib = harness::generate_calibration(cfg.hidden, 256, 2);
    for (auto _ : state) {
        auto model = Parallel ? harness::compress_network(net, calib, 8, 4, Precision::Half)
                              : harness::compress_network_serial(net, calib, 8, 4, Precision::Half);
        benchmark::DoNotOptimize(model);
    }
}

} // namespace

BENCHMARK(bm_matmul<false>)->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<true>)->Arg(64)->Arg(256);
BENCHMARK(bm_signed_outer<false>)->Arg(256)->Arg(1024);
BENCHMARK(bm_signed_outer<true>)->Arg(256)->Arg(1024);
BENCHMARK(bm_compress_network<false>)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_compress_network<true>)->Arg(64)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
    kernels::configure_threads_from_env();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
