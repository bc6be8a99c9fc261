#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "rppg/errors.hpp"

namespace rppg::binio {

// File formats store little-endian IEEE-754 doubles; writing raw bytes is
// only valid on a matching host.
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");
static_assert(std::numeric_limits<double>::is_iec559,
              "binary formats assume IEEE-754 doubles");

class Writer {
public:
    Writer(std::ostream& os, std::string path) : os_(os), path_(std::move(path)) {}

    void bytes(const void* p, std::size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!os_) throw IoError("write failed at offset " +
                                std::to_string(offset_) + " of " + path_);
        offset_ += n;
    }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void f64_array(const double* p, std::size_t n) { bytes(p, 8 * n); }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::ostream& os_;
    std::string path_;
    std::size_t offset_ = 0;
};

class Reader {
public:
    Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

    void bytes(void* p, std::size_t n, const char* what) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw FormatError(path_ + ": truncated while reading " + what +
                              " at offset " + std::to_string(offset_));
        offset_ += n;
    }
    std::uint16_t u16(const char* what) {
        std::uint16_t v;
        bytes(&v, 2, what);
        return v;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    double f64(const char* what) {
        double v;
        bytes(&v, 8, what);
        return v;
    }
    void f64_array(double* p, std::size_t n, const char* what) {
        bytes(p, 8 * n, what);
    }
    void magic(const char expect[4], const char* format_name) {
        char m[4];
        std::size_t at = offset_;
        bytes(m, 4, "magic");
        if (std::memcmp(m, expect, 4) != 0)
            throw FormatError(path_ + ": bad magic at offset " +
                              std::to_string(at) + ", not a " + format_name +
                              " file");
    }
    // True when the stream is exactly at end of file.
    bool at_eof() {
        return is_.peek() == std::char_traits<char>::eof();
    }
    std::size_t offset() const noexcept { return offset_; }
    const std::string& path() const noexcept { return path_; }

private:
    std::istream& is_;
    std::string path_;
    std::size_t offset_ = 0;
};

} // namespace rppg::binio
