#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "bitstack/avd.hpp"
#include "bitstack/loader.hpp"
#include "bitstack/matrix.hpp"
#include "bitstack/stack.hpp"

// Small deterministic test network with calibration data, activation
// collection, an output-discrepancy score and budget sweeps.
namespace bitstack::harness {

struct NetworkConfig {
    std::size_t layers = 4;
    std::size_t maps = 2;   // linear maps per layer
    std::size_t hidden = 64;
    std::size_t inner = 0;  // width between maps of a layer; 0 means hidden

    std::size_t inner_width() const noexcept { return inner == 0 ? hidden : inner; }
    std::size_t n_weights() const noexcept { return layers * maps; }
    std::size_t in_dim(std::size_t map) const noexcept { return map == 0 ? hidden : inner_width(); }
    std::size_t out_dim(std::size_t map) const noexcept { return map + 1 == maps ? hidden : inner_width(); }

    void validate() const;
    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Layer l: u_0 = h; u_{j+1} = tanh(u_j W_lj) for j < M-1; o = u_{M-1} W_l,M-1.
/// Every layer adds o to the residual stream (h <- h + o). The output is the
/// sum of the layer updates, h_L - x, so all-zero weights produce a zero output.
struct ReferenceNetwork {
    NetworkConfig config;
    std::vector<DenseMatrix> weights; // index layer * maps + map
    std::vector<avd::WeightId> ids;

    friend bool operator==(const ReferenceNetwork&, const ReferenceNetwork&) = default;
};

ReferenceNetwork build_reference_network(const NetworkConfig& config, std::uint64_t seed);

/// Wraps externally supplied weights; shapes must match the config.
ReferenceNetwork make_network(const NetworkConfig& config, std::vector<DenseMatrix> weights);

/// p x hidden inputs with log-normally distributed per-channel scales, so a
/// few channels dominate the way outlier channels do in real activations.
DenseMatrix generate_calibration(std::size_t dim, std::size_t rows, std::uint64_t seed);

/// Computes x * W for weight `index`.
using LinearMap = std::function<DenseMatrix(std::size_t index, const DenseMatrix& x)>;

DenseMatrix forward(const NetworkConfig& config, const LinearMap& map, const DenseMatrix& x);
DenseMatrix forward(const ReferenceNetwork& net, const DenseMatrix& x);
DenseMatrix forward(const NetworkConfig& config, const loader::LoadedModel& model, const DenseMatrix& x);

/// Input matrix seen by every linear map during a forward pass over `calib`.
std::vector<DenseMatrix> collect_activations(const ReferenceNetwork& net, const DenseMatrix& calib);

/// Mean over all output entries of the squared difference.
double mean_squared_error(const DenseMatrix& a, const DenseMatrix& b);

/// Output MSE between the original and the compressed network over calib.
double surrogate_score(const ReferenceNetwork& original, const ReferenceNetwork& compressed,
                       const DenseMatrix& calib);

/// Evaluator for the sorting strategies: runs the network with the
/// reconstructed scaled weights of a ModelView and compares against the
/// original outputs on a fixed calibration batch.
class SurrogateEvaluator {
public:
    SurrogateEvaluator(const ReferenceNetwork& original, std::vector<scaling::ScalingVector> scaling,
                       DenseMatrix calib);

    double operator()(const stack::ModelView& view) const;

    const DenseMatrix& reference_outputs() const noexcept { return reference_; }

private:
    NetworkConfig config_;
    std::vector<scaling::ScalingVector> scaling_;
    DenseMatrix calib_;
    DenseMatrix reference_;
};

/// Activation-aware scaling of every weight followed by iterative AVD. The
/// order of the result is the unsorted round-robin order.
loader::CompressedModel compress_network(const ReferenceNetwork& net, const DenseMatrix& calib,
                                         std::size_t n_iters, std::size_t k, Precision precision);

/// Same as compress_network but strictly sequential; kept as the reference
/// for the parallel path.
loader::CompressedModel compress_network_serial(const ReferenceNetwork& net, const DenseMatrix& calib,
                                                std::size_t n_iters, std::size_t k, Precision precision);

/// First `rows` rows of the calibration batch (the smaller sorting set).
DenseMatrix head_rows(const DenseMatrix& m, std::size_t rows);

/// Replaces model.order using the given strategy.
void sort_model(loader::CompressedModel& model, stack::SortStrategy strategy, const ReferenceNetwork& original,
                const DenseMatrix& sort_calib, std::uint64_t seed);

struct SweepRow {
    std::uint64_t budget_bytes = 0;
    std::uint64_t loaded_bytes = 0;
    std::size_t prefix_len = 0;
    bool degenerate = false;
    double eval_score = 0.0;
    std::vector<std::size_t> levels;
};

/// `points` budgets evenly spaced up to the full model size: total*j/points, j = 1..points.
std::vector<std::uint64_t> sweep_grid(std::uint64_t total_bytes, std::size_t points);

/// Budgets from..to inclusive in steps of stride (stride > 0).
std::vector<std::uint64_t> stride_grid(std::uint64_t from, std::uint64_t to, std::uint64_t stride);

/// Loads the model at every budget (incrementally, in the given order) and scores it.
std::vector<SweepRow> budget_sweep(const loader::CompressedModel& model, const ReferenceNetwork& original,
                                   const DenseMatrix& calib, std::span<const std::uint64_t> budgets);

/// Columns: budget_bytes,loaded_bytes,prefix_len,degenerate,eval_score.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

/// Full-size bytes of the model's blocks (ceil per block).
std::uint64_t full_model_bytes(const loader::CompressedModel& model);

// Matrix file: "BMAT", u32 version 1, u64 rows, u64 cols, rows*cols f64,
// all little-endian, row-major.
void write_matrix(std::ostream& out, const DenseMatrix& m);
DenseMatrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const DenseMatrix& m);
DenseMatrix load_matrix(const std::string& path);

// Network file: "BNET", u32 version 1, u32 layers, u32 maps, u32 hidden,
// u32 inner, then layers*maps matrix records as above.
void write_network(std::ostream& out, const ReferenceNetwork& net);
ReferenceNetwork read_network(std::istream& in);
void save_network(const std::string& path, const ReferenceNetwork& net);
ReferenceNetwork load_network(const std::string& path);

} // namespace bitstack::harness
