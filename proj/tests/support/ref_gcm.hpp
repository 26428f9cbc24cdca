#pragma once

// Straight-line AES-256-GCM (FIPS 197 + SP 800-38D) for cross-checking the OpenSSL path.
// Slow and not constant-time; test use only.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace ct::testing {

struct RefSealed {
    std::vector<std::uint8_t> ciphertext;
    std::array<std::uint8_t, 16> tag{};
};

/// 96-bit IV only.
RefSealed ref_gcm_encrypt(std::span<const std::uint8_t> key, std::span<const std::uint8_t> iv,
                          std::span<const std::uint8_t> aad, std::span<const std::uint8_t> plaintext);

}  // namespace ct::testing
