#include "cryptotensors/format.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cryptotensors/error.hpp"

namespace ct::format {
namespace {

using json = nlohmann::json;

struct DtypeEntry {
    Dtype dtype;
    std::string_view name;
    std::size_t size;
};

constexpr DtypeEntry kDtypeTable[] = {
    {Dtype::BOOL, "BOOL", 1}, {Dtype::U8, "U8", 1},   {Dtype::I8, "I8", 1},     {Dtype::I16, "I16", 2},
    {Dtype::U16, "U16", 2},   {Dtype::F16, "F16", 2}, {Dtype::BF16, "BF16", 2}, {Dtype::F32, "F32", 4},
    {Dtype::U32, "U32", 4},   {Dtype::I32, "I32", 4}, {Dtype::F64, "F64", 8},   {Dtype::U64, "U64", 8},
    {Dtype::I64, "I64", 8},
};

void append_json_string(std::string& out, std::string_view s) {
    static constexpr char digits[] = "0123456789abcdef";
    out.push_back('"');
    for (const char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    out += "\\u00";
                    out.push_back(digits[c >> 4]);
                    out.push_back(digits[c & 15]);
                } else {
                    out.push_back(ch);
                }
        }
    }
    out.push_back('"');
}

void append_tensor_fields(std::string& out, const TensorInfo& t, bool canonical_order) {
    const auto shape = [&] {
        out += "\"shape\":[";
        for (std::size_t i = 0; i < t.shape.size(); ++i) {
            if (i) out.push_back(',');
            out += std::to_string(t.shape[i]);
        }
        out.push_back(']');
    };
    const auto offsets = [&] {
        out += "\"data_offsets\":[" + std::to_string(t.begin) + "," + std::to_string(t.end) + "]";
    };
    const auto dtype = [&] {
        out += "\"dtype\":";
        append_json_string(out, dtype_name(t.dtype));
    };
    out.push_back('{');
    if (canonical_order) {
        offsets();
        out.push_back(',');
        dtype();
        out.push_back(',');
        shape();
    } else {
        dtype();
        out.push_back(',');
        shape();
        out.push_back(',');
        offsets();
    }
    out.push_back('}');
}

void append_metadata(std::string& out, const Metadata& metadata) {
    out.push_back('{');
    bool first = true;
    for (const auto& [k, v] : metadata) {
        if (!first) out.push_back(',');
        first = false;
        append_json_string(out, k);
        out.push_back(':');
        append_json_string(out, v);
    }
    out.push_back('}');
}

std::uint64_t as_u64(const json& v, const char* what) {
    if (!v.is_number_unsigned()) throw Error(Errc::MalformedJson, std::string(what) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

TensorInfo decode_tensor(const std::string& name, const json& entry) {
    if (!entry.is_object()) throw Error(Errc::MalformedJson, "tensor '" + name + "' is not an object");
    TensorInfo info;
    info.name = name;
    bool have_dtype = false, have_shape = false, have_offsets = false;
    for (const auto& [key, value] : entry.items()) {
        if (key == "dtype") {
            if (!value.is_string()) throw Error(Errc::InvalidDtype, "dtype of '" + name + "' is not a string");
            info.dtype = parse_dtype(value.get_ref<const std::string&>());
            have_dtype = true;
        } else if (key == "shape") {
            if (!value.is_array()) throw Error(Errc::MalformedJson, "shape of '" + name + "' is not an array");
            for (const auto& d : value) info.shape.push_back(as_u64(d, "shape entry"));
            have_shape = true;
        } else if (key == "data_offsets") {
            if (!value.is_array() || value.size() != 2) {
                throw Error(Errc::MalformedJson, "data_offsets of '" + name + "' must be [begin, end]");
            }
            info.begin = as_u64(value[0], "data_offsets");
            info.end = as_u64(value[1], "data_offsets");
            have_offsets = true;
        } else {
            throw Error(Errc::MalformedJson, "unexpected field '" + key + "' in tensor '" + name + "'");
        }
    }
    if (!have_dtype || !have_shape || !have_offsets) {
        throw Error(Errc::MalformedJson, "tensor '" + name + "' lacks dtype, shape or data_offsets");
    }
    return info;
}

}  // namespace

std::size_t element_size(Dtype dtype) noexcept {
    for (const auto& e : kDtypeTable) {
        if (e.dtype == dtype) return e.size;
    }
    return 0;
}

std::string_view dtype_name(Dtype dtype) noexcept {
    for (const auto& e : kDtypeTable) {
        if (e.dtype == dtype) return e.name;
    }
    return "?";
}

Dtype parse_dtype(std::string_view tag) {
    for (const auto& e : kDtypeTable) {
        if (e.name == tag) return e.dtype;
    }
    throw Error(Errc::InvalidDtype, "unknown dtype '" + std::string(tag) + "'");
}

bool is_reserved_key(std::string_view key) noexcept {
    return std::find(kReservedKeys.begin(), kReservedKeys.end(), key) != kReservedKeys.end();
}

std::uint64_t tensor_byte_len(Dtype dtype, std::span<const std::uint64_t> shape) {
    std::uint64_t n = element_size(dtype);
    for (const auto d : shape) {
        if (d == 0) return 0;
    }
    for (const auto d : shape) {
        if (__builtin_mul_overflow(n, d, &n)) throw Error(Errc::Overflow, "tensor byte length exceeds 64 bits");
    }
    return n;
}

const TensorInfo* Header::find(std::string_view name) const noexcept {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

RawFile split_file(ByteView file, const ParseOptions& options) {
    if (file.size() < 8) throw Error(Errc::TruncatedFile, "file shorter than the 8-byte length prefix");
    std::uint64_t n = 0;
    for (int i = 7; i >= 0; --i) n = (n << 8) | file[static_cast<std::size_t>(i)];
    if (n > options.max_header_len) {
        throw Error(Errc::HeaderTooLarge, "header length " + std::to_string(n) + " exceeds limit " +
                                              std::to_string(options.max_header_len));
    }
    if (n > file.size() - 8) throw Error(Errc::TruncatedFile, "header extends past end of file");
    RawFile raw;
    raw.header_len = n;
    raw.header_bytes = file.subspan(8, static_cast<std::size_t>(n));
    raw.body = file.subspan(8 + static_cast<std::size_t>(n));
    return raw;
}

Header decode_header_json(std::string_view text) {
    // nlohmann keeps the last of duplicate keys; track them so they can be rejected.
    std::vector<std::set<std::string>> seen;
    bool duplicate = false;
    const json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start: seen.emplace_back(); break;
            case json::parse_event_t::object_end: seen.pop_back(); break;
            case json::parse_event_t::key:
                if (!seen.back().insert(parsed.get<std::string>()).second) duplicate = true;
                break;
            default: break;
        }
        return true;
    };
    json doc;
    try {
        doc = json::parse(text.begin(), text.end(), cb);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedJson, e.what());
    }
    if (duplicate) throw Error(Errc::MalformedJson, "duplicate key in header");
    if (!doc.is_object()) throw Error(Errc::MalformedJson, "header is not a JSON object");

    Header header;
    for (const auto& [key, value] : doc.items()) {
        if (key == kMetadataKey) {
            if (!value.is_object()) throw Error(Errc::MalformedMetadata, "__metadata__ is not an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) throw Error(Errc::MalformedMetadata, "metadata value for '" + mk + "' is not a string");
                header.metadata.emplace(mk, mv.get<std::string>());
            }
            continue;
        }
        header.tensors.push_back(decode_tensor(key, value));
    }
    std::sort(header.tensors.begin(), header.tensors.end(), [](const TensorInfo& a, const TensorInfo& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        if (a.end != b.end) return a.end < b.end;
        return a.name < b.name;
    });
    return header;
}

void validate_layout(const Header& header, std::uint64_t body_length) {
    std::unordered_set<std::string_view> names;
    std::uint64_t cursor = 0;
    for (const auto& t : header.tensors) {
        if (!names.insert(t.name).second) throw Error(Errc::DuplicateName, "duplicate tensor '" + t.name + "'");
        if (t.end < t.begin || t.end > body_length) {
            throw Error(LayoutIssue::OutOfBounds, "tensor '" + t.name + "' offsets [" + std::to_string(t.begin) + ", " +
                                                      std::to_string(t.end) + ") outside body of " +
                                                      std::to_string(body_length) + " bytes");
        }
        std::uint64_t expected = 0;
        try {
            expected = tensor_byte_len(t.dtype, t.shape);
        } catch (const Error&) {
            throw Error(LayoutIssue::SizeMismatch, "tensor '" + t.name + "' byte length overflows");
        }
        if (t.end - t.begin != expected) {
            throw Error(LayoutIssue::SizeMismatch, "tensor '" + t.name + "' spans " + std::to_string(t.end - t.begin) +
                                                       " bytes, dtype and shape need " + std::to_string(expected));
        }
        if (t.begin > cursor) {
            throw Error(LayoutIssue::Gap, "gap before tensor '" + t.name + "' at offset " + std::to_string(cursor));
        }
        if (t.begin < cursor) throw Error(LayoutIssue::Overlap, "tensor '" + t.name + "' overlaps its predecessor");
        cursor = t.end;
    }
    if (cursor != body_length) {
        throw Error(LayoutIssue::Gap, "body bytes [" + std::to_string(cursor) + ", " + std::to_string(body_length) +
                                          ") are not covered by any tensor");
    }
}

ParsedFile parse_header(ByteView file, const ParseOptions& options) {
    ParsedFile parsed;
    parsed.raw = split_file(file, options);
    parsed.header = decode_header_json(as_chars(parsed.raw.header_bytes));
    validate_layout(parsed.header, parsed.raw.body.size());
    return parsed;
}

BuiltHeader build_header(std::span<const TensorSpec> tensors, const Metadata& metadata) {
    std::vector<const TensorSpec*> order;
    order.reserve(tensors.size());
    for (const auto& t : tensors) {
        if (!is_valid_utf8(t.name)) throw Error(Errc::NameNotUtf8, "tensor name is not valid UTF-8");
        if (t.name == kMetadataKey) throw Error(Errc::InvalidArgument, "'__metadata__' is not a valid tensor name");
        order.push_back(&t);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->name == order[i - 1]->name) {
            throw Error(Errc::DuplicateName, "duplicate tensor name '" + order[i]->name + "'");
        }
    }
    BuiltHeader out;
    out.header.metadata = metadata;
    std::uint64_t cursor = 0;
    for (const auto* spec : order) {
        const auto len = tensor_byte_len(spec->dtype, spec->shape);
        TensorInfo info{spec->name, spec->dtype, spec->shape, cursor, 0};
        if (__builtin_add_overflow(cursor, len, &info.end)) throw Error(Errc::Overflow, "body length exceeds 64 bits");
        cursor = info.end;
        out.header.tensors.push_back(std::move(info));
    }
    out.body_length = cursor;
    out.header_bytes = encode_header(out.header);
    return out;
}

Bytes encode_header(const Header& header) {
    for (const auto& [k, v] : header.metadata) {
        if (!is_valid_utf8(k) || !is_valid_utf8(v)) throw Error(Errc::MalformedMetadata, "metadata is not valid UTF-8");
    }
    std::string out;
    out.push_back('{');
    bool first = true;
    if (!header.metadata.empty()) {
        append_json_string(out, kMetadataKey);
        out.push_back(':');
        append_metadata(out, header.metadata);
        first = false;
    }
    for (const auto& t : header.tensors) {
        if (!first) out.push_back(',');
        first = false;
        append_json_string(out, t.name);
        out.push_back(':');
        append_tensor_fields(out, t, false);
    }
    out.push_back('}');
    while ((8 + out.size()) % 8 != 0) out.push_back(' ');
    return Bytes(out.begin(), out.end());
}

std::array<std::uint8_t, 8> length_prefix(std::uint64_t header_len) noexcept {
    std::array<std::uint8_t, 8> prefix{};
    for (std::size_t i = 0; i < 8; ++i) prefix[i] = static_cast<std::uint8_t>(header_len >> (8 * i));
    return prefix;
}

std::string canonicalize(const Header& header) {
    if (header.metadata.count(std::string(kSignatureKey)) != 0) {
        throw Error(Errc::SignaturePresent, "strip __signature__ before canonicalizing");
    }
    // Top-level keys are the tensor names plus "__metadata__" (when non-empty),
    // emitted in byte-wise order.
    std::vector<std::pair<std::string_view, const TensorInfo*>> keys;
    keys.reserve(header.tensors.size() + 1);
    if (!header.metadata.empty()) keys.emplace_back(kMetadataKey, nullptr);
    for (const auto& t : header.tensors) keys.emplace_back(t.name, &t);
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::string out;
    out.push_back('{');
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (i) out.push_back(',');
        append_json_string(out, keys[i].first);
        out.push_back(':');
        if (keys[i].second == nullptr) {
            append_metadata(out, header.metadata);
        } else {
            append_tensor_fields(out, *keys[i].second, true);
        }
    }
    out.push_back('}');
    return out;
}

bool is_valid_utf8(std::string_view text) noexcept {
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    const auto* end = p + text.size();
    while (p < end) {
        const unsigned c = *p;
        if (c < 0x80) {
            ++p;
            continue;
        }
        std::size_t extra;
        std::uint32_t cp;
        if ((c & 0xe0) == 0xc0) {
            extra = 1;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            extra = 2;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (static_cast<std::size_t>(end - p) <= extra) return false;
        for (std::size_t i = 1; i <= extra; ++i) {
            if ((p[i] & 0xc0) != 0x80) return false;
            cp = (cp << 6) | (p[i] & 0x3f);
        }
        static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
        if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
        p += extra + 1;
    }
    return true;
}

}  // namespace ct::format
