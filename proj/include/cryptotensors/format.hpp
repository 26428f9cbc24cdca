#pragma once

// Container layout: [u64 LE header_len][header JSON, space padded][body].
// Tensor entries are {"dtype": tag, "shape": [..], "data_offsets": [begin, end]}
// with offsets relative to the body start; "__metadata__" is a string->string map.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cryptotensors/bytes.hpp"

namespace ct::format {

enum class Dtype : std::uint8_t { BOOL, U8, I8, I16, U16, F16, BF16, F32, U32, I32, F64, U64, I64 };

inline constexpr std::array<Dtype, 13> kAllDtypes = {
    Dtype::BOOL, Dtype::U8,  Dtype::I8,  Dtype::I16, Dtype::U16, Dtype::F16, Dtype::BF16,
    Dtype::F32,  Dtype::U32, Dtype::I32, Dtype::F64, Dtype::U64, Dtype::I64,
};

std::size_t element_size(Dtype dtype) noexcept;
std::string_view dtype_name(Dtype dtype) noexcept;
/// Throws Error{InvalidDtype} for anything outside the 13 known tags.
Dtype parse_dtype(std::string_view tag);

using Shape = std::vector<std::uint64_t>;

/// element_size * product(shape); throws Error{Overflow} past 2^64 - 1.
std::uint64_t tensor_byte_len(Dtype dtype, std::span<const std::uint64_t> shape);

struct TensorInfo {
    std::string name;
    Dtype dtype = Dtype::U8;
    Shape shape;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t byte_len() const noexcept { return end - begin; }
    friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

using Metadata = std::map<std::string, std::string>;

inline constexpr std::string_view kMetadataKey = "__metadata__";

// Reserved "__metadata__" entries carrying the protection envelope. Each value is
// itself a JSON document stored as a string.
inline constexpr std::string_view kCryptoKeysKey = "__crypto_keys__";
inline constexpr std::string_view kEncryptionKey = "__encryption__";
inline constexpr std::string_view kPolicyKey = "__policy__";
inline constexpr std::string_view kSignatureKey = "__signature__";
inline constexpr std::array<std::string_view, 4> kReservedKeys = {kCryptoKeysKey, kEncryptionKey, kPolicyKey,
                                                                  kSignatureKey};

bool is_reserved_key(std::string_view key) noexcept;

struct Header {
    std::vector<TensorInfo> tensors;  // ascending by begin offset
    Metadata metadata;

    const TensorInfo* find(std::string_view name) const noexcept;
    friend bool operator==(const Header&, const Header&) = default;
};

struct ParseOptions {
    std::uint64_t max_header_len = 100'000'000;
};

/// The three regions of a container, before the header JSON is interpreted.
struct RawFile {
    std::uint64_t header_len = 0;
    ByteView header_bytes;  // includes trailing padding
    ByteView body;
};

struct ParsedFile {
    Header header;
    RawFile raw;
};

/// Splits a container into its regions. Reads only the first 8 + header_len bytes.
RawFile split_file(ByteView file, const ParseOptions& options = {});

/// Decodes header JSON into a Header without checking it against a body.
/// Tensors come back sorted by (begin, end, name).
Header decode_header_json(std::string_view json);

/// Throws a LayoutError naming the first violated invariant.
void validate_layout(const Header& header, std::uint64_t body_length);

/// split_file + decode_header_json + validate_layout. Never reads body bytes.
ParsedFile parse_header(ByteView file, const ParseOptions& options = {});

struct TensorSpec {
    std::string name;
    Dtype dtype = Dtype::U8;
    Shape shape;
};

struct BuiltHeader {
    Header header;
    Bytes header_bytes;  // padded JSON, without the length prefix
    std::uint64_t body_length = 0;
};

/// Lays tensors out contiguously in lexicographic name order and emits the header.
BuiltHeader build_header(std::span<const TensorSpec> tensors, const Metadata& metadata);

/// Emits an already laid-out header: "__metadata__" first (omitted when empty),
/// then tensors in offset order, then ASCII spaces until 8 + len is a multiple of 8.
Bytes encode_header(const Header& header);

std::array<std::uint8_t, 8> length_prefix(std::uint64_t header_len) noexcept;

/// Deterministic JSON of the abstract header (the signature payload). Keys sorted
/// byte-wise at every level, no whitespace, minimal escaping, no padding.
/// Throws Error{SignaturePresent} if "__signature__" is in the metadata.
std::string canonicalize(const Header& header);

bool is_valid_utf8(std::string_view text) noexcept;

}  // namespace ct::format
