#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vlx {

using Digest256 = std::array<std::uint8_t, 32>;

// FIPS 180-4 SHA-256. Used for model fingerprints and stack-cache keys;
// verified against the NIST short-message vectors in the unit tests.
class Sha256 {
  public:
    Sha256();
    void update(const void* data, std::size_t len);
    Digest256 finish();

    static Digest256 hash(const void* data, std::size_t len);
    static Digest256 hash(const std::string& s);

  private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_;
    std::array<std::uint8_t, 64> buffer_;
    std::size_t buffered_;
    std::uint64_t total_bits_;
};

std::string to_hex(const Digest256& d);

}  // namespace vlx
