#include "bitstack/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <ostream>

#include "bitstack/byteio.hpp"
#include "bitstack/kernels.hpp"
#include "bitstack/linalg.hpp"
#include "bitstack/rng.hpp"
#include "bitstack/scaling.hpp"

namespace bitstack::harness {

void NetworkConfig::validate() const {
    if (layers < 1 || maps < 1 || hidden < 1)
        throw Error(ErrorCode::BadConfig, "network needs at least one layer, one map and a positive width");
    if (layers > 4096 || maps > 4096 || hidden > 1u << 16 || inner > 1u << 16)
        throw Error(ErrorCode::BadConfig, "network dimensions are unreasonably large");
}

namespace {

std::vector<avd::WeightId> make_ids(const NetworkConfig& config) {
    std::vector<avd::WeightId> ids;
    for (std::size_t l = 0; l < config.layers; ++l)
        for (std::size_t j = 0; j < config.maps; ++j)
            ids.push_back({static_cast<std::uint32_t>(l), "lin" + std::to_string(j)});
    return ids;
}

DenseMatrix tanh_of(DenseMatrix m) {
    for (double& v : m.data()) v = std::tanh(v);
    return m;
}

} // namespace

ReferenceNetwork make_network(const NetworkConfig& config, std::vector<DenseMatrix> weights) {
    config.validate();
    if (weights.size() != config.n_weights())
        throw Error(ErrorCode::BadConfig, "expected " + std::to_string(config.n_weights()) + " weights, got " +
                                              std::to_string(weights.size()));
    for (std::size_t idx = 0; idx < weights.size(); ++idx) {
        const std::size_t j = idx % config.maps;
        if (weights[idx].rows() != config.in_dim(j) || weights[idx].cols() != config.out_dim(j))
            throw Error(ErrorCode::BadConfig, "weight " + std::to_string(idx) + " has the wrong shape");
    }
    return {config, std::move(weights), make_ids(config)};
}

ReferenceNetwork build_reference_network(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    std::vector<DenseMatrix> weights;
    for (std::size_t l = 0; l < config.layers; ++l)
        for (std::size_t j = 0; j < config.maps; ++j) {
            const std::size_t in = config.in_dim(j);
            weights.push_back(rng.gaussian(in, config.out_dim(j), 1.0 / std::sqrt(static_cast<double>(in))));
        }
    return make_network(config, std::move(weights));
}

DenseMatrix generate_calibration(std::size_t dim, std::size_t rows, std::uint64_t seed) {
    if (dim == 0 || rows == 0) throw Error(ErrorCode::BadConfig, "calibration batch must be nonempty");
    Rng rng(seed);
    std::vector<double> channel_scale(dim);
    for (double& s : channel_scale) s = std::exp(rng.normal());
    DenseMatrix x(rows, dim);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < dim; ++j) x(i, j) = channel_scale[j] * rng.normal();
    return x;
}

DenseMatrix forward(const NetworkConfig& config, const LinearMap& map, const DenseMatrix& x) {
    if (x.cols() != config.hidden)
        throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(x.cols()) + " != hidden " +
                                                  std::to_string(config.hidden));
    DenseMatrix h = x;
    DenseMatrix out(x.rows(), x.cols());
    for (std::size_t l = 0; l < config.layers; ++l) {
        DenseMatrix u = h;
        for (std::size_t j = 0; j < config.maps; ++j) {
            DenseMatrix v = map(l * config.maps + j, u);
            if (j + 1 < config.maps) {
                u = tanh_of(std::move(v));
            } else {
                out += v;
                if (l + 1 < config.layers) h += v;
            }
        }
    }
    return out;
}

DenseMatrix forward(const ReferenceNetwork& net, const DenseMatrix& x) {
    return forward(
        net.config, [&](std::size_t idx, const DenseMatrix& in) { return kernels::matmul(in, net.weights[idx]); }, x);
}

DenseMatrix forward(const NetworkConfig& config, const loader::LoadedModel& model, const DenseMatrix& x) {
    if (model.model().n_weights() != config.n_weights())
        throw Error(ErrorCode::ShapeMismatch, "model and network have different weight counts");
    return forward(config, [&](std::size_t idx, const DenseMatrix& in) { return model.apply(idx, in); }, x);
}

std::vector<DenseMatrix> collect_activations(const ReferenceNetwork& net, const DenseMatrix& calib) {
    std::vector<DenseMatrix> inputs(net.config.n_weights());
    forward(
        net.config,
        [&](std::size_t idx, const DenseMatrix& in) {
            inputs[idx] = in;
            return kernels::matmul(in, net.weights[idx]);
        },
        calib);
    return inputs;
}

double mean_squared_error(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "outputs have different shapes");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    return acc / static_cast<double>(x.size());
}

double surrogate_score(const ReferenceNetwork& original, const ReferenceNetwork& compressed,
                       const DenseMatrix& calib) {
    if (!(original.config == compressed.config) || original.weights.size() != compressed.weights.size())
        throw Error(ErrorCode::ShapeMismatch, "networks have different architectures");
    for (std::size_t i = 0; i < original.weights.size(); ++i)
        if (!original.weights[i].same_shape(compressed.weights[i]))
            throw Error(ErrorCode::ShapeMismatch, "weight " + std::to_string(i) + " shapes differ");
    return mean_squared_error(forward(original, calib), forward(compressed, calib));
}

SurrogateEvaluator::SurrogateEvaluator(const ReferenceNetwork& original,
                                       std::vector<scaling::ScalingVector> scaling, DenseMatrix calib)
    : config_(original.config), scaling_(std::move(scaling)), calib_(std::move(calib)),
      reference_(forward(original, calib_)) {
    if (scaling_.size() != config_.n_weights())
        throw Error(ErrorCode::ShapeMismatch, "one scaling vector per weight is required");
}

double SurrogateEvaluator::operator()(const stack::ModelView& view) const {
    if (view.weights.size() != config_.n_weights())
        throw Error(ErrorCode::ShapeMismatch, "view has the wrong number of weights");
    const DenseMatrix out = forward(
        config_,
        [&](std::size_t idx, const DenseMatrix& in) {
            return scaling::scaled_product(in, scaling_[idx], *view.weights[idx]);
        },
        calib_);
    return mean_squared_error(reference_, out);
}

namespace {

template <bool Parallel>
loader::CompressedModel compress_impl(const ReferenceNetwork& net, const DenseMatrix& calib, std::size_t n_iters,
                                      std::size_t k, Precision precision) {
    const auto activations = collect_activations(net, calib);
    const std::size_t count = net.weights.size();
    loader::CompressedModel model;
    model.precision = precision;
    model.stacks.resize(count);
    model.scaling.resize(count);
    for (std::size_t w = 0; w < count; ++w) model.scaling[w] = scaling::compute_scaling(activations[w]);

    std::vector<std::exception_ptr> failures(count);
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic) if (Parallel)
    for (std::ptrdiff_t ww = 0; ww < n; ++ww) {
        const auto w = static_cast<std::size_t>(ww);
        try {
            const DenseMatrix scaled = scaling::apply_scaling(net.weights[w], model.scaling[w]);
            model.stacks[w] = avd::decompose_weight(scaled, n_iters, k, precision, net.ids[w]);
        } catch (...) {
            failures[w] = std::current_exception();
        }
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    model.order = stack::unsorted_order(count, n_iters);
    return model;
}

} // namespace

loader::CompressedModel compress_network(const ReferenceNetwork& net, const DenseMatrix& calib, std::size_t n_iters,
                                         std::size_t k, Precision precision) {
    return compress_impl<true>(net, calib, n_iters, k, precision);
}

loader::CompressedModel compress_network_serial(const ReferenceNetwork& net, const DenseMatrix& calib,
                                                std::size_t n_iters, std::size_t k, Precision precision) {
    return compress_impl<false>(net, calib, n_iters, k, precision);
}

DenseMatrix head_rows(const DenseMatrix& m, std::size_t rows) {
    rows = std::min(rows, m.rows());
    DenseMatrix out(rows, m.cols());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
    return out;
}

static void order_model(loader::CompressedModel& model, stack::SortStrategy strategy,
                        const ReferenceNetwork& original, const DenseMatrix& sort_calib, std::uint64_t seed) {
    switch (strategy) {
    case stack::SortStrategy::Unsorted:
        model.order = stack::unsorted_order(model.n_weights(), model.n_iters());
        return;
    case stack::SortStrategy::Random:
        model.order = stack::sort_random(model.n_weights(), model.n_iters(), seed);
        return;
    case stack::SortStrategy::Average:
    case stack::SortStrategy::Greedy: {
        const SurrogateEvaluator evaluator(original, model.scaling, sort_calib);
        const stack::Evaluator eval = [&](const stack::ModelView& v) { return evaluator(v); };
        model.order = strategy == stack::SortStrategy::Average ? stack::sort_average(model.stacks, eval)
                                                               : stack::sort_greedy(model.stacks, eval);
        return;
    }
    }
}

void sort_model(loader::CompressedModel& model, stack::SortStrategy strategy, const ReferenceNetwork& original,
                const DenseMatrix& sort_calib, std::uint64_t seed) {
    order_model(model, strategy, original, sort_calib, seed);
    stack::annotate_importance(model.stacks, model.order);
}


std::vector<std::uint64_t> sweep_grid(std::uint64_t total_bytes, std::size_t points) {
    std::vector<std::uint64_t> budgets;
    for (std::size_t j = 1; j <= points; ++j) budgets.push_back(total_bytes / points * j + total_bytes % points * j / points);
    return budgets;
}

std::vector<std::uint64_t> stride_grid(std::uint64_t from, std::uint64_t to, std::uint64_t stride) {
    if (stride == 0) throw Error(ErrorCode::BadConfig, "sweep stride must be positive");
    std::vector<std::uint64_t> budgets;
    for (std::uint64_t b = from; b <= to; b += stride) {
        budgets.push_back(b);
        if (to - b < stride) break;
    }
    return budgets;
}

std::vector<SweepRow> budget_sweep(const loader::CompressedModel& model, const ReferenceNetwork& original,
                                   const DenseMatrix& calib, std::span<const std::uint64_t> budgets) {
    if (model.n_weights() != original.config.n_weights())
        throw Error(ErrorCode::ShapeMismatch, "model and network have different weight counts");
    const DenseMatrix reference = forward(original, calib);
    const auto bits = model.block_bits_in_order();
    loader::LoadedModel loaded(std::make_shared<const loader::CompressedModel>(model));

    std::vector<SweepRow> rows;
    rows.reserve(budgets.size());
    for (auto budget : budgets) {
        const auto plan = loader::resolve_budget(model.order, bits, budget, model.n_weights());
        loaded = loader::apply_plan(loaded, plan).first;
        SweepRow row;
        row.budget_bytes = budget;
        row.loaded_bytes = plan.total_bytes;
        row.prefix_len = plan.prefix_len;
        row.degenerate = plan.degenerate;
        row.levels = plan.per_weight_level;
        row.eval_score = mean_squared_error(reference, forward(original.config, loaded, calib));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "budget_bytes,loaded_bytes,prefix_len,degenerate,eval_score\n";
    const auto old_precision = out.precision(17);
    for (const auto& r : rows)
        out << r.budget_bytes << ',' << r.loaded_bytes << ',' << r.prefix_len << ','
            << (r.degenerate ? "true" : "false") << ',' << r.eval_score << '\n';
    out.precision(old_precision);
}

std::uint64_t full_model_bytes(const loader::CompressedModel& model) {
    std::uint64_t total = 0;
    for (const auto& s : model.stacks)
        for (const auto& b : s.blocks) total += loader::block_size_bytes(b.size_bits);
    return total;
}

namespace {

constexpr std::string_view kMatrixMagic = "BMAT";
constexpr std::string_view kNetworkMagic = "BNET";
constexpr std::uint32_t kFileVersion = 1;

void encode_matrix(byteio::Writer& w, const DenseMatrix& m) {
    w.raw(kMatrixMagic);
    w.u32(kFileVersion);
    w.u64(m.rows());
    w.u64(m.cols());
    for (double v : m.data()) w.f64(v);
}

DenseMatrix decode_matrix(byteio::Reader& r) {
    const auto at = r.offset();
    if (r.str(4) != kMatrixMagic) throw StreamError(ErrorCode::BadMagic, at, "not a matrix record");
    if (r.u32() != kFileVersion) throw StreamError(ErrorCode::VersionMismatch, at, "unsupported matrix version");
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows != 0 && cols > r.remaining() / 8 / rows)
        throw StreamError(ErrorCode::TruncatedStream, r.offset(), "matrix data shorter than its shape");
    std::vector<double> data(rows * cols);
    for (double& v : data) v = r.f64();
    try {
        return {rows, cols, std::move(data)};
    } catch (const Error& e) {
        throw StreamError(ErrorCode::CorruptRecord, at, e.what());
    }
}

std::vector<std::uint8_t> slurp(std::istream& in) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed");
    return bytes;
}

void spill(std::ostream& out, const std::vector<std::uint8_t>& bytes) {
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed");
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
    return out;
}

} // namespace

void write_matrix(std::ostream& out, const DenseMatrix& m) {
    byteio::Writer w;
    encode_matrix(w, m);
    spill(out, w.bytes());
}

DenseMatrix read_matrix(std::istream& in) {
    const auto bytes = slurp(in);
    byteio::Reader r(bytes);
    return decode_matrix(r);
}

void save_matrix(const std::string& path, const DenseMatrix& m) {
    auto out = open_out(path);
    write_matrix(out, m);
}

DenseMatrix load_matrix(const std::string& path) {
    auto in = open_in(path);
    return read_matrix(in);
}

void write_network(std::ostream& out, const ReferenceNetwork& net) {
    byteio::Writer w;
    w.raw(kNetworkMagic);
    w.u32(kFileVersion);
    w.u32(static_cast<std::uint32_t>(net.config.layers));
    w.u32(static_cast<std::uint32_t>(net.config.maps));
    w.u32(static_cast<std::uint32_t>(net.config.hidden));
    w.u32(static_cast<std::uint32_t>(net.config.inner));
    for (const auto& m : net.weights) encode_matrix(w, m);
    spill(out, w.bytes());
}

ReferenceNetwork read_network(std::istream& in) {
    const auto bytes = slurp(in);
    byteio::Reader r(bytes);
    if (r.str(4) != kNetworkMagic) throw StreamError(ErrorCode::BadMagic, 0, "not a network file");
    if (r.u32() != kFileVersion) throw StreamError(ErrorCode::VersionMismatch, 4, "unsupported network version");
    NetworkConfig config;
    config.layers = r.u32();
    config.maps = r.u32();
    config.hidden = r.u32();
    config.inner = r.u32();
    config.validate();
    std::vector<DenseMatrix> weights;
    for (std::size_t i = 0; i < config.n_weights(); ++i) weights.push_back(decode_matrix(r));
    return make_network(config, std::move(weights));
}

void save_network(const std::string& path, const ReferenceNetwork& net) {
    auto out = open_out(path);
    write_network(out, net);
}

ReferenceNetwork load_network(const std::string& path) {
    auto in = open_in(path);
    return read_network(in);
}

} // namespace bitstack::harness
