#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ct {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) noexcept {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string_view as_chars(ByteView b) noexcept {
    return {reinterpret_cast<const char*>(b.data()), b.size()};
}

/// Standard alphabet, padded.
std::string base64_encode(ByteView data);

/// Strict: rejects non-alphabet characters, bad padding and non-zero trailing bits.
/// Throws Error{InvalidArgument} on malformed input.
Bytes base64_decode(std::string_view text);

std::string hex_encode(ByteView data);
Bytes hex_decode(std::string_view text);

Bytes read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it into place. On failure the
/// temporary is removed and the destination is untouched.
void write_file_atomic(const std::filesystem::path& path, ByteView data, bool owner_only = false);
void write_file_atomic(const std::filesystem::path& path, std::span<const ByteView> parts, bool owner_only = false);

}  // namespace ct
