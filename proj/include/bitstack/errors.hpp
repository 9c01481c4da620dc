#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bitstack {

enum class ErrorCode : int {
    InvalidArgument = 1,
    NonFinite,
    DimensionMismatch,
    NonConvergence,
    InvalidRank,
    MalformedBuffer,
    LevelOutOfRange,
    EvaluatorFailure,
    PlanMismatch,
    BadMagic,
    VersionMismatch,
    CorruptRecord,
    TruncatedStream,
    RangeOutOfBounds,
    IoFailure,
    BadConfig,
    ShapeMismatch,
};

constexpr std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InvalidRank: return "InvalidRank";
    case ErrorCode::MalformedBuffer: return "MalformedBuffer";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::EvaluatorFailure: return "EvaluatorFailure";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::TruncatedStream: return "TruncatedStream";
    case ErrorCode::RangeOutOfBounds: return "RangeOutOfBounds";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    }
    return "Unknown";
}

// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view code_name() const noexcept { return error_code_name(code_); }

private:
    ErrorCode code_;
};

// Stream decoding errors also report where in the byte stream they happened.
class StreamError : public Error {
public:
    StreamError(ErrorCode code, std::uint64_t offset, const std::string& message)
        : Error(code, message + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

} // namespace bitstack
