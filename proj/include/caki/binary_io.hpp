#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caki/error.hpp"

namespace caki {

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void text(std::string_view s) {
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void f32s(std::span<const double> v) {
        for (double x : v) f32(x);
    }

    const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
    std::vector<std::uint8_t> release() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader. Every read names the section it
/// belongs to so truncation errors say what was missing.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint64_t offset() const noexcept { return pos_; }
    std::uint64_t remaining() const noexcept { return data_.size() - pos_; }

    std::span<const std::uint8_t> take(std::size_t n, std::string_view section) {
        if (n > remaining()) {
            throw FormatError("truncated file: missing " + std::string(section), pos_);
        }
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(std::string_view section) { return take(1, section)[0]; }
    std::uint16_t u16(std::string_view section) { return static_cast<std::uint16_t>(get(2, section)); }
    std::uint32_t u32(std::string_view section) { return static_cast<std::uint32_t>(get(4, section)); }
    std::uint64_t u64(std::string_view section) { return get(8, section); }
    double f32(std::string_view section) {
        const std::uint64_t at = pos_;
        const float f = std::bit_cast<float>(u32(section));
        if (!std::isfinite(f)) {
            throw FormatError("non-finite value in " + std::string(section), at);
        }
        return static_cast<double>(f);
    }
    std::vector<double> f32s(std::size_t n, std::string_view section) {
        std::vector<double> out(n);
        for (double& x : out) x = f32(section);
        return out;
    }

private:
    std::uint64_t get(int n, std::string_view section) {
        auto s = take(static_cast<std::size_t>(n), section);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(s[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::uint64_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace caki
