#pragma once

// Little-endian primitives for the VLXM / VLXS binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "vlx/errors.hpp"

namespace vlx::wire {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
  public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), size_(size) {}
    explicit Reader(const std::vector<std::uint8_t>& buf) : Reader(buf.data(), buf.size()) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        const std::uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
        pos_ += len;
        return s;
    }

    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }

    void expect_magic(const char magic[4], const char* what) {
        need(4);
        if (std::memcmp(p_ + pos_, magic, 4) != 0) {
            throw Error(ErrorCode::Format, std::string(what) + ": bad magic");
        }
        pos_ += 4;
    }

    bool at_end() const { return pos_ == size_; }
    std::size_t remaining() const { return size_ - pos_; }

  private:
    void need(std::size_t n) {
        if (pos_ + n > size_) {
            throw Error(ErrorCode::Format, "truncated data: need " + std::to_string(n) +
                                               " bytes at offset " + std::to_string(pos_));
        }
    }
    const std::uint8_t* p_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace vlx::wire
