#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bitstack/errors.hpp"

namespace bitstack::byteio {

/// Appends little-endian fixed-width values to a byte buffer.
class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    void patch_u32(std::size_t offset, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
    }

    std::size_t size() const noexcept { return bytes_.size(); }
    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    void put(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader. Running past the end throws
/// TruncatedStream with the absolute offset (base + position).
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data, std::uint64_t base = 0) : data_(data), base_(base) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }

    std::span<const std::uint8_t> raw(std::size_t n) {
        require(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::string str(std::size_t n) {
        auto bytes = raw(n);
        return {bytes.begin(), bytes.end()};
    }

    void require(std::uint64_t n) const {
        if (n > remaining())
            throw StreamError(ErrorCode::TruncatedStream, offset(),
                              "need " + std::to_string(n) + " bytes, " + std::to_string(remaining()) +
                                  " remain");
    }

    std::uint64_t remaining() const noexcept { return data_.size() - pos_; }
    std::uint64_t position() const noexcept { return pos_; }
    std::uint64_t offset() const noexcept { return base_ + pos_; }
    void seek(std::uint64_t pos) {
        if (pos > data_.size())
            throw StreamError(ErrorCode::TruncatedStream, base_ + data_.size(), "seek past end of stream");
        pos_ = pos;
    }

private:
    std::uint64_t get(int width) {
        require(static_cast<std::uint64_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::uint64_t base_;
    std::size_t pos_ = 0;
};

} // namespace bitstack::byteio
