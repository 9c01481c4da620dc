#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bitstack/loader.hpp"

// Container format v1 (little-endian throughout, see docs/FORMAT.md):
//
//   header        72 bytes, fixed layout
//   weight table  per weight: layer, role, shape, scaling vector (f64)
//   order table   u32 count, then (u32 weight, u32 iteration, f64 score)
//   block records in universal order, each prefixed by its u32 body length
//   trailer       u64 offset of every record, u64 index start, u32 count, "BEND"
//
// Blocks follow the load order, so any budget prefix is one contiguous byte range.
namespace bitstack::store {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 72;
inline constexpr std::size_t kTrailerTailSize = 16;
/// Size of a container with no weights: header, empty order table, trailer tail.
inline constexpr std::size_t kEmptyContainerSize = kHeaderSize + 4 + kTrailerTailSize;

enum class Source : std::uint8_t { Seeded = 0, External = 1 };

/// Run configuration echoed into the header. With Source::Seeded the reference
/// network and calibration batch can be regenerated from `seed`.
struct ContainerConfig {
    Precision precision = Precision::Half;
    stack::SortStrategy strategy = stack::SortStrategy::Unsorted;
    Source model_source = Source::Seeded;
    Source calib_source = Source::Seeded;
    std::uint32_t n_iters = 0;
    std::uint32_t k = 0;
    std::uint32_t layers = 0;
    std::uint32_t maps = 0;
    std::uint32_t hidden = 0;
    std::uint32_t inner = 0;
    std::uint32_t calib_rows = 0;
    std::uint32_t sort_rows = 0;
    std::uint64_t seed = 0;
    std::uint64_t sort_seed = 0;

    friend bool operator==(const ContainerConfig&, const ContainerConfig&) = default;
};

struct Artifacts {
    ContainerConfig config;
    loader::CompressedModel model;

    friend bool operator==(const Artifacts&, const Artifacts&) = default;
};

/// Deterministic encoding; identical artifacts give identical bytes.
std::vector<std::uint8_t> serialize(const Artifacts& artifacts);

/// Exact inverse of serialize. Errors: BadMagic, VersionMismatch,
/// TruncatedStream and CorruptRecord, the latter two with the byte offset.
Artifacts deserialize(std::span<const std::uint8_t> bytes);

/// Reads header fields only.
ContainerConfig read_config(std::span<const std::uint8_t> header_bytes);

/// Blocks at universal positions [from, to), located through the trailer index
/// so only those records are read. Throws RangeOutOfBounds for bad ranges.
std::vector<avd::ResidualBlock> read_block_range(std::istream& in, std::size_t from, std::size_t to);

void write_file(const std::string& path, const Artifacts& artifacts);
Artifacts read_file(const std::string& path);
std::vector<std::uint8_t> read_bytes(const std::string& path);

} // namespace bitstack::store
