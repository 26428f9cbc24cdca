#include "cryptotensors/envelope.hpp"

#include <nlohmann/json.hpp>

#include "cryptotensors/error.hpp"

namespace ct {
namespace {

using json = nlohmann::json;

template <std::size_t N>
std::array<std::uint8_t, N> decode_field(const json& record, const char* field, const std::string& tensor) {
    const auto it = record.find(field);
    if (it == record.end() || !it->is_string()) {
        throw Error(Errc::MalformedMetadata, "encryption record for '" + tensor + "' lacks " + field);
    }
    Bytes raw;
    try {
        raw = base64_decode(it->get_ref<const std::string&>());
    } catch (const Error&) {
        throw Error(Errc::MalformedMetadata, std::string(field) + " of '" + tensor + "' is not valid base64");
    }
    if (raw.size() != N) {
        throw Error(Errc::MalformedMetadata, std::string(field) + " of '" + tensor + "' decodes to " +
                                                 std::to_string(raw.size()) + " bytes, expected " + std::to_string(N));
    }
    std::array<std::uint8_t, N> out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
}

}  // namespace

std::string encode_encryption_table(const EncryptionTable& table) {
    json doc = json::object();
    for (const auto& [name, r] : table) {
        doc[name] = {
            {"alg", r.alg},
            {"iv", base64_encode(r.iv)},
            {"tag", base64_encode(r.tag)},
            {"wrapped_key", base64_encode(r.dek.wrapped_key)},
            {"key_iv", base64_encode(r.dek.key_iv)},
            {"key_tag", base64_encode(r.dek.key_tag)},
        };
    }
    return doc.dump();
}

EncryptionTable parse_encryption_table(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedMetadata, std::string("__encryption__: ") + e.what());
    }
    if (!doc.is_object()) throw Error(Errc::MalformedMetadata, "__encryption__ is not a JSON object");
    EncryptionTable table;
    for (const auto& [name, record] : doc.items()) {
        if (!record.is_object()) throw Error(Errc::MalformedMetadata, "encryption record for '" + name + "' is not an object");
        TensorEncryptionRecord r;
        const auto alg = record.find("alg");
        if (alg == record.end() || !alg->is_string()) {
            throw Error(Errc::MalformedMetadata, "encryption record for '" + name + "' lacks alg");
        }
        r.alg = alg->get<std::string>();
        crypto::require_aead_alg(r.alg);
        r.iv = decode_field<crypto::kIvSize>(record, "iv", name);
        r.tag = decode_field<crypto::kTagSize>(record, "tag", name);
        r.dek.wrapped_key = decode_field<crypto::kKeySize>(record, "wrapped_key", name);
        r.dek.key_iv = decode_field<crypto::kIvSize>(record, "key_iv", name);
        r.dek.key_tag = decode_field<crypto::kTagSize>(record, "key_tag", name);
        table.emplace(name, r);
    }
    return table;
}

bool is_protected(const format::Header& header) noexcept {
    for (const auto key : format::kReservedKeys) {
        if (header.metadata.count(std::string(key))) return true;
    }
    return false;
}

std::string signing_payload(const format::Header& header) {
    if (header.metadata.count(std::string(format::kSignatureKey)) == 0) return format::canonicalize(header);
    auto stripped = header;
    stripped.metadata.erase(std::string(format::kSignatureKey));
    return format::canonicalize(stripped);
}

format::Header sign_header(format::Header header, const crypto::SignKeyPair& keypair) {
    header.metadata.erase(std::string(format::kSignatureKey));
    const auto payload = format::canonicalize(header);
    const auto sig = crypto::sign_header(keypair, as_bytes(payload));
    header.metadata[std::string(format::kSignatureKey)] = base64_encode(sig);
    return header;
}

bool verify_header_signature(const format::Header& header, const crypto::PublicKey& public_key) {
    const auto it = header.metadata.find(std::string(format::kSignatureKey));
    if (it == header.metadata.end()) throw Error(Errc::MalformedSignature, "header has no __signature__");
    const auto payload = signing_payload(header);
    return crypto::verify_header_b64(public_key, as_bytes(payload), it->second);
}

}  // namespace ct
