#include "bitstack/store.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>

#include "bitstack/byteio.hpp"

namespace bitstack::store {

namespace {

constexpr std::string_view kMagic = "BSTK";
constexpr std::string_view kEndMagic = "BEND";
constexpr std::uint32_t kEndianMarker = 0x01020304u;

[[noreturn]] void corrupt(std::uint64_t offset, const std::string& what) {
    throw StreamError(ErrorCode::CorruptRecord, offset, what);
}

void encode_header(byteio::Writer& w, const ContainerConfig& c, std::uint32_t n_weights) {
    w.raw(kMagic);
    w.u32(kFormatVersion);
    w.u32(kEndianMarker);
    w.u8(static_cast<std::uint8_t>(c.precision));
    w.u8(static_cast<std::uint8_t>(c.strategy));
    w.u8(static_cast<std::uint8_t>(c.model_source));
    w.u8(static_cast<std::uint8_t>(c.calib_source));
    w.u32(n_weights);
    w.u32(c.n_iters);
    w.u32(c.k);
    w.u32(c.layers);
    w.u32(c.maps);
    w.u32(c.hidden);
    w.u32(c.inner);
    w.u32(c.calib_rows);
    w.u32(c.sort_rows);
    w.u32(0); // reserved
    w.u64(c.seed);
    w.u64(c.sort_seed);
}

struct Header {
    ContainerConfig config;
    std::uint32_t n_weights = 0;
};

Header decode_header(byteio::Reader& r) {
    if (r.remaining() < 4) r.require(4);
    if (r.str(4) != kMagic) throw StreamError(ErrorCode::BadMagic, 0, "missing container magic");
    const auto version = r.u32();
    if (version != kFormatVersion)
        throw StreamError(ErrorCode::VersionMismatch, 4,
                          "container version " + std::to_string(version) + ", expected " +
                              std::to_string(kFormatVersion));
    if (r.u32() != kEndianMarker) corrupt(8, "bad endianness marker");
    Header h;
    auto& c = h.config;
    const auto precision = r.u8();
    const auto strategy = r.u8();
    const auto model_source = r.u8();
    const auto calib_source = r.u8();
    if (precision > 1) corrupt(12, "unknown precision code");
    if (strategy > 3) corrupt(13, "unknown sort strategy code");
    if (model_source > 1 || calib_source > 1) corrupt(14, "unknown source code");
    c.precision = static_cast<Precision>(precision);
    c.strategy = static_cast<stack::SortStrategy>(strategy);
    c.model_source = static_cast<Source>(model_source);
    c.calib_source = static_cast<Source>(calib_source);
    h.n_weights = r.u32();
    c.n_iters = r.u32();
    c.k = r.u32();
    c.layers = r.u32();
    c.maps = r.u32();
    c.hidden = r.u32();
    c.inner = r.u32();
    c.calib_rows = r.u32();
    c.sort_rows = r.u32();
    if (r.u32() != 0) corrupt(52, "reserved header field is nonzero");
    c.seed = r.u64();
    c.sort_seed = r.u64();
    return h;
}

void encode_factor(byteio::Writer& w, double v, Precision p) {
    if (p == Precision::Half)
        w.u16(to_half_bits(v));
    else
        w.f32(static_cast<float>(v));
}

DenseMatrix decode_factors(byteio::Reader& r, std::size_t rows, std::size_t cols, Precision p) {
    const auto at = r.offset();
    std::vector<double> data(rows * cols);
    for (double& v : data) {
        v = p == Precision::Half ? from_half_bits(r.u16()) : static_cast<double>(r.f32());
        if (!std::isfinite(v)) corrupt(at, "non-finite factor entry");
    }
    return {rows, cols, std::move(data)};
}

std::size_t factor_bytes(Precision p) { return factor_bits(p) / 8; }

void encode_block(byteio::Writer& w, std::uint32_t weight_index, const avd::ResidualBlock& b, Precision p) {
    const std::size_t len_at = w.size();
    w.u32(0);
    const std::size_t body_at = w.size();
    w.u32(weight_index);
    w.u32(b.weight.layer);
    w.u16(static_cast<std::uint16_t>(b.weight.role.size()));
    w.raw(b.weight.role);
    w.u32(b.iteration);
    w.u32(static_cast<std::uint32_t>(b.rows()));
    w.u32(static_cast<std::uint32_t>(b.cols()));
    w.u32(static_cast<std::uint32_t>(b.rank()));
    w.u64(b.size_bits);
    w.u8(b.importance ? 1 : 0);
    w.f64(b.importance.value_or(0.0));
    w.raw(b.signs.bits);
    for (double v : b.left.data()) encode_factor(w, v, p);
    for (double v : b.right.data()) encode_factor(w, v, p);
    w.patch_u32(len_at, static_cast<std::uint32_t>(w.size() - body_at));
}

struct DecodedBlock {
    std::uint32_t weight_index = 0;
    avd::ResidualBlock block;
};

// `r` is positioned at the length prefix of a record.
DecodedBlock decode_block(byteio::Reader& r, Precision p) {
    const auto record_at = r.offset();
    const auto body_len = r.u32();
    r.require(body_len);
    const auto body_at = r.offset();
    byteio::Reader body(r.raw(body_len), body_at);

    DecodedBlock out;
    auto& b = out.block;
    out.weight_index = body.u32();
    b.weight.layer = body.u32();
    b.weight.role = body.str(body.u16());
    b.iteration = body.u32();
    const std::uint64_t m = body.u32();
    const std::uint64_t n = body.u32();
    const std::uint64_t k = body.u32();
    b.size_bits = body.u64();
    const auto has_importance = body.u8();
    const double importance = body.f64();
    if (has_importance > 1) corrupt(record_at, "bad importance flag");
    if (has_importance) {
        if (!std::isfinite(importance)) corrupt(record_at, "non-finite importance");
        b.importance = importance;
    }
    if (m == 0 || n == 0 || k == 0 || k > std::min(m, n)) corrupt(record_at, "bad block shape");
    const std::uint64_t sign_len = signpack::packed_size(m, n);
    const std::uint64_t payload = sign_len + (m + n) * k * factor_bytes(p);
    if (payload != body.remaining()) corrupt(record_at, "record length disagrees with its shape");
    if (b.size_bits != loader::block_size_bits(m, n, k, p)) corrupt(record_at, "declared size_bits disagrees with shape");

    auto sign_bytes = body.raw(sign_len);
    b.signs = {m, n, std::vector<std::uint8_t>(sign_bytes.begin(), sign_bytes.end())};
    try {
        signpack::validate(b.signs);
    } catch (const Error& e) {
        corrupt(record_at, e.what());
    }
    b.left = decode_factors(body, m, k, p);
    b.right = decode_factors(body, n, k, p);
    return out;
}

} // namespace

std::vector<std::uint8_t> serialize(const Artifacts& artifacts) {
    const auto& model = artifacts.model;
    const auto& cfg = artifacts.config;
    if (model.scaling.size() != model.stacks.size())
        throw Error(ErrorCode::InvalidArgument, "one scaling vector per weight is required");
    if (model.order.order.size() != model.n_weights() * model.n_iters() ||
        model.order.scores.size() != model.order.order.size())
        throw Error(ErrorCode::InvalidArgument, "order must cover every block with one score each");
    if (model.precision != cfg.precision) throw Error(ErrorCode::InvalidArgument, "precision mismatch");
    if (model.order.strategy != cfg.strategy) throw Error(ErrorCode::InvalidArgument, "sort strategy mismatch");
    for (const auto& s : model.stacks) avd::validate(s, model.precision);

    byteio::Writer w;
    encode_header(w, cfg, static_cast<std::uint32_t>(model.n_weights()));

    for (std::size_t i = 0; i < model.n_weights(); ++i) {
        const auto& s = model.stacks[i];
        const auto& sv = model.scaling[i];
        if (sv.size() != s.rows()) throw Error(ErrorCode::InvalidArgument, "scaling length != weight rows");
        w.u32(s.weight.layer);
        w.u16(static_cast<std::uint16_t>(s.weight.role.size()));
        w.raw(s.weight.role);
        w.u32(static_cast<std::uint32_t>(s.rows()));
        w.u32(static_cast<std::uint32_t>(s.cols()));
        for (double v : sv.values()) w.f64(v);
    }

    w.u32(static_cast<std::uint32_t>(model.order.order.size()));
    for (std::size_t i = 0; i < model.order.order.size(); ++i) {
        w.u32(static_cast<std::uint32_t>(model.order.order[i].weight));
        w.u32(model.order.order[i].iteration);
        w.f64(model.order.scores[i]);
    }

    std::vector<std::uint64_t> offsets;
    offsets.reserve(model.order.order.size());
    for (const auto& ref : model.order.order) {
        if (ref.weight >= model.n_weights() || ref.iteration < 1 || ref.iteration > model.n_iters())
            throw Error(ErrorCode::InvalidArgument, "order references a missing block");
        offsets.push_back(w.size());
        encode_block(w, static_cast<std::uint32_t>(ref.weight), model.stacks[ref.weight].blocks[ref.iteration - 1],
                     model.precision);
    }

    const std::uint64_t index_at = w.size();
    for (auto off : offsets) w.u64(off);
    w.u64(index_at);
    w.u32(static_cast<std::uint32_t>(offsets.size()));
    w.raw(kEndMagic);
    return w.take();
}

ContainerConfig read_config(std::span<const std::uint8_t> header_bytes) {
    byteio::Reader r(header_bytes);
    return decode_header(r).config;
}

Artifacts deserialize(std::span<const std::uint8_t> bytes) {
    byteio::Reader r(bytes);
    const Header header = decode_header(r);
    Artifacts a;
    a.config = header.config;
    auto& model = a.model;
    model.precision = header.config.precision;
    const std::uint64_t n_weights = header.n_weights;
    const std::uint64_t n_iters = header.config.n_iters;

    // every weight entry takes at least 18 bytes
    if (n_weights > r.remaining() / 18) r.require(n_weights * 18);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;
    for (std::uint64_t i = 0; i < n_weights; ++i) {
        const auto at = r.offset();
        avd::WeightStack s;
        s.weight.layer = r.u32();
        s.weight.role = r.str(r.u16());
        const std::uint64_t m = r.u32();
        const std::uint64_t n = r.u32();
        if (m == 0 || n == 0) corrupt(at, "weight with an empty shape");
        r.require(m * 8);
        std::vector<double> sv(m);
        for (double& v : sv) v = r.f64();
        try {
            model.scaling.emplace_back(std::move(sv));
        } catch (const Error& e) {
            corrupt(at, e.what());
        }
        shapes.emplace_back(m, n);
        model.stacks.push_back(std::move(s));
    }

    const auto order_at = r.offset();
    const std::uint64_t count = r.u32();
    if (count != n_weights * n_iters) corrupt(order_at, "order table does not cover every block");
    r.require(count * 16);
    model.order.strategy = header.config.strategy;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto at = r.offset();
        const std::uint64_t weight = r.u32();
        const std::uint32_t iteration = r.u32();
        const double score = r.f64();
        if (weight >= n_weights || iteration < 1 || iteration > n_iters) corrupt(at, "order entry out of range");
        if (!std::isfinite(score)) corrupt(at, "non-finite score");
        model.order.order.push_back({static_cast<std::size_t>(weight), iteration});
        model.order.scores.push_back(score);
    }

    std::vector<std::uint64_t> offsets;
    offsets.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto at = r.offset();
        offsets.push_back(at);
        DecodedBlock d = decode_block(r, model.precision);
        const auto& ref = model.order.order[i];
        if (d.weight_index != ref.weight || d.block.iteration != ref.iteration)
            corrupt(at, "record does not match its order entry");
        auto& s = model.stacks[ref.weight];
        if (d.block.weight != s.weight) corrupt(at, "record weight id disagrees with the weight table");
        if (d.block.rows() != shapes[ref.weight].first || d.block.cols() != shapes[ref.weight].second)
            corrupt(at, "record shape disagrees with the weight table");
        if (d.block.iteration != s.blocks.size() + 1) corrupt(at, "blocks of a weight are out of iteration order");
        s.blocks.push_back(std::move(d.block));
    }

    const auto index_at = r.offset();
    for (std::uint64_t i = 0; i < count; ++i)
        if (r.u64() != offsets[i]) corrupt(r.offset() - 8, "trailer index disagrees with record offsets");
    if (r.u64() != index_at) corrupt(r.offset() - 8, "trailer index start is wrong");
    if (r.u32() != count) corrupt(r.offset() - 4, "trailer block count is wrong");
    if (r.str(4) != kEndMagic) corrupt(r.offset() - 4, "missing end marker");
    if (r.remaining() != 0) corrupt(r.offset(), "trailing bytes after the end marker");
    return a;
}

namespace {

std::vector<std::uint8_t> read_exact(std::istream& in, std::uint64_t offset, std::uint64_t n) {
    in.clear();
    in.seekg(static_cast<std::streamoff>(offset));
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in.gcount()) != n)
        throw StreamError(ErrorCode::TruncatedStream, offset + static_cast<std::uint64_t>(in.gcount()),
                          "stream ended early");
    return buf;
}

} // namespace

std::vector<avd::ResidualBlock> read_block_range(std::istream& in, std::size_t from, std::size_t to) {
    in.clear();
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    if (end < 0) throw Error(ErrorCode::IoFailure, "stream is not seekable");
    const auto size = static_cast<std::uint64_t>(end);
    if (size < kHeaderSize + kTrailerTailSize)
        throw StreamError(ErrorCode::TruncatedStream, size, "too short for a container");

    const auto head = read_exact(in, 0, kHeaderSize);
    byteio::Reader hr(head);
    const Header header = decode_header(hr);

    const auto tail = read_exact(in, size - kTrailerTailSize, kTrailerTailSize);
    byteio::Reader tr(tail, size - kTrailerTailSize);
    const std::uint64_t index_at = tr.u64();
    const std::uint64_t count = tr.u32();
    if (tr.str(4) != kEndMagic) corrupt(size - 4, "missing end marker");
    if (index_at + count * 8 + kTrailerTailSize != size) corrupt(size - kTrailerTailSize, "bad trailer index");

    if (from > to || to > count)
        throw Error(ErrorCode::RangeOutOfBounds, "block range [" + std::to_string(from) + ", " + std::to_string(to) +
                                                     ") outside [0, " + std::to_string(count) + ")");
    std::vector<avd::ResidualBlock> blocks;
    if (from == to) return blocks;

    const auto index = read_exact(in, index_at + from * 8, (to - from) * 8);
    byteio::Reader ir(index, index_at + from * 8);
    for (std::size_t i = from; i < to; ++i) {
        const std::uint64_t at = ir.u64();
        if (at + 4 > index_at) corrupt(index_at + i * 8, "record offset out of range");
        const auto len_bytes = read_exact(in, at, 4);
        const std::uint64_t body_len = byteio::Reader(len_bytes).u32();
        if (at + 4 + body_len > index_at) corrupt(at, "record runs into the trailer");
        const auto record = read_exact(in, at, 4 + body_len);
        byteio::Reader rr(record, at);
        blocks.push_back(decode_block(rr, header.config.precision).block);
    }
    return blocks;
}

void write_file(const std::string& path, const Artifacts& artifacts) {
    const auto bytes = serialize(artifacts);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + tmp + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.close();
        if (!out) throw Error(ErrorCode::IoFailure, "write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoFailure, "read from '" + path + "' failed");
    return bytes;
}

Artifacts read_file(const std::string& path) { return deserialize(read_bytes(path)); }

} // namespace bitstack::store
