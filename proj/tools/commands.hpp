#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bitstack/harness.hpp"
#include "bitstack/store.hpp"

// The pipeline behind each subcommand, kept free of argument parsing so the
// tests can drive it directly.
namespace bitstack::cli {

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t n_iters = 16;
    std::size_t k = 16;
    Precision precision = Precision::Half;
    harness::NetworkConfig network;
    std::size_t calib_rows = 256;
    std::size_t sort_rows = 32;
    std::optional<std::string> weights_path; // BNET file instead of a seeded network
    std::optional<std::string> calib_path;   // BMAT file instead of a seeded batch

    void validate() const;
};

/// Files standing in for whatever the container header marks as external.
struct Sources {
    std::optional<std::string> weights_path;
    std::optional<std::string> calib_path;
};

/// Seed of the calibration batch belonging to run seed `seed`.
std::uint64_t calibration_seed(std::uint64_t seed);

/// Network and calibration batch a container was built from.
struct Environment {
    harness::ReferenceNetwork network;
    DenseMatrix calib;
};

Environment environment(const store::ContainerConfig& config, const Sources& sources);

store::Artifacts cmd_decompose(const RunConfig& config);

void cmd_sort(store::Artifacts& artifacts, stack::SortStrategy strategy, std::uint64_t sort_seed,
              const Sources& sources = {});

struct LoadReport {
    std::uint64_t budget_bytes = 0;
    std::uint64_t loaded_bytes = 0;
    std::uint64_t full_bytes = 0;
    std::size_t prefix_len = 0;
    std::size_t n_blocks = 0;
    bool degenerate = true;
    double score = 0.0;
    double baseline_score = 0.0; // all weights at level 0
    std::vector<avd::WeightId> ids;
    std::vector<std::size_t> levels;
};

LoadReport cmd_load_eval(const store::Artifacts& artifacts, std::uint64_t budget_bytes,
                         const Sources& sources = {});
void print_load_report(std::ostream& out, const LoadReport& report);

struct SizeRow {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t k = 0;
    std::uint64_t bits = 0;
    std::uint64_t bytes = 0;
    double mib = 0.0;
};

/// One row per weight, sized for a single residual block.
std::vector<SizeRow> cmd_sizes(const store::Artifacts& artifacts);
SizeRow size_row(std::string name, std::size_t rows, std::size_t cols, std::size_t k, Precision precision);

/// MiB rounded half away from zero to two decimals.
double round_mib(double mib);

void print_size_table(std::ostream& out, const std::vector<SizeRow>& rows);
void write_size_csv(std::ostream& out, const std::vector<SizeRow>& rows);

std::vector<harness::SweepRow> cmd_sweep(const store::Artifacts& artifacts, const std::vector<std::uint64_t>& budgets,
                                         const Sources& sources = {});

/// gnuplot script plotting eval_score against budget from `csv_path`.
void write_gnuplot_script(std::ostream& out, const std::string& csv_path);

struct VerifyReport {
    std::size_t n_weights = 0;
    std::size_t n_iters = 0;
    std::size_t n_blocks = 0;
    stack::OrderReport order;
    std::vector<std::string> problems;

    bool ok() const noexcept { return order.ok() && problems.empty(); }
};

/// Structural checks on a decoded container: stack validity, order coverage
/// and invariants, header consistency.
VerifyReport cmd_verify(const store::Artifacts& artifacts);
void print_verify_report(std::ostream& out, const VerifyReport& report);

/// Byte count with an optional B, KiB, MiB or GiB suffix ("1.5MiB", "4096").
std::uint64_t parse_bytes(std::string_view text);

/// "MxN" as used by `sizes --shape`.
std::pair<std::size_t, std::size_t> parse_shape(std::string_view text);

/// Process exit status for an error code: 10 + its numeric value.
int exit_code(ErrorCode code);

inline constexpr int kExitUsage = 2;
inline constexpr int kExitVerifyFailed = 3;

} // namespace bitstack::cli
