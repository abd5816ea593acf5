#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace flowlab {

/// Incremental SHA-256 (FIPS 180-4).
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    std::array<std::uint8_t, 32> finish();

    /// Lowercase hex digest of a buffer.
    static std::string hex(std::span<const std::uint8_t> data);
    static std::string hex_of_string(const std::string& s);
    /// Digest of a file's contents; throws on IO failure.
    static std::string hex_of_file(const std::string& path);

private:
    void process_block(const std::uint8_t* p);

    std::array<std::uint32_t, 8> state_;
    std::uint64_t total_ = 0;
    std::array<std::uint8_t, 64> buf_;
    std::size_t buf_len_ = 0;
};

}  // namespace flowlab
