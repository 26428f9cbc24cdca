#include "cryptotensors/serializer.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <unordered_map>

#include "cryptotensors/error.hpp"

namespace ct {
namespace {

struct Assembled {
    Bytes header_bytes;
    Bytes body;
};

format::Metadata merged_metadata(const format::Metadata& metadata, const SerializeConfig* config) {
    format::Metadata out = metadata;
    if (config != nullptr) {
        for (const auto& [k, v] : config->extra_metadata) {
            if (!out.emplace(k, v).second) throw Error(Errc::MetadataKeyCollision, "metadata key '" + k + "' given twice");
        }
    }
    for (const auto& [k, v] : out) {
        if (format::is_reserved_key(k)) throw Error(Errc::MetadataKeyCollision, "metadata key '" + k + "' is reserved");
    }
    return out;
}

std::set<std::string> selected_names(std::span<const TensorInput> tensors, const EncryptSelection& selection) {
    std::set<std::string> names;
    switch (selection.kind) {
        case EncryptSelection::Kind::None: break;
        case EncryptSelection::Kind::All:
            for (const auto& t : tensors) names.insert(t.name);
            break;
        case EncryptSelection::Kind::Names: {
            std::set<std::string_view> known;
            for (const auto& t : tensors) known.insert(t.name);
            for (const auto& n : selection.names) {
                if (known.count(n) == 0) throw Error(Errc::UnknownTensorInSelection, "no tensor named '" + n + "'");
                names.insert(n);
            }
            break;
        }
    }
    return names;
}

Assembled assemble(std::span<const TensorInput> tensors, const SerializeConfig* config, const format::Metadata& metadata) {
    std::vector<format::TensorSpec> specs;
    specs.reserve(tensors.size());
    std::unordered_map<std::string_view, const TensorInput*> by_name;
    for (const auto& t : tensors) {
        specs.push_back({t.name, t.dtype, t.shape});
        by_name.emplace(t.name, &t);
    }
    auto layout = format::build_header(specs, merged_metadata(metadata, config));
    for (const auto& info : layout.header.tensors) {
        const auto* input = by_name.at(info.name);
        if (input->data.size() != info.byte_len()) {
            throw Error(Errc::SizeMismatch, "tensor '" + info.name + "' has " + std::to_string(input->data.size()) +
                                                " bytes, dtype and shape need " + std::to_string(info.byte_len()));
        }
    }

    Assembled out;
    out.body.resize(static_cast<std::size_t>(layout.body_length));

    if (config == nullptr) {
        for (const auto& info : layout.header.tensors) {
            const auto data = by_name.at(info.name)->data;
            if (!data.empty()) std::memcpy(out.body.data() + info.begin, data.data(), data.size());
        }
        out.header_bytes = std::move(layout.header_bytes);
        return out;
    }

    crypto::require_aead_alg(config->enc_alg);
    crypto::require_sign_alg(config->keys_meta.sign.alg);
    auto& rng = config->random != nullptr ? *config->random : crypto::system_random();
    const auto encrypt = selected_names(tensors, config->encrypt_selection);

    EncryptionTable table;
    for (const auto& info : layout.header.tensors) {
        const auto data = by_name.at(info.name)->data;
        const auto dst = std::span<std::uint8_t>(out.body).subspan(info.begin, data.size());
        if (encrypt.count(info.name) == 0) {
            if (!data.empty()) std::memcpy(dst.data(), data.data(), data.size());
            continue;
        }
        // The tensor name is the AAD for both layers, binding ciphertext and wrapped
        // key to this entry.
        const auto aad = as_bytes(info.name);
        const auto dek = crypto::generate_dek(rng);
        TensorEncryptionRecord record;
        record.alg = config->enc_alg;
        record.iv = crypto::generate_iv(rng);
        record.tag = crypto::aead_encrypt_into(dek.view(), record.iv, aad, data, dst);
        record.dek = crypto::wrap_dek(config->master_key, dek, aad, rng);
        table.emplace(info.name, record);
    }

    auto& md = layout.header.metadata;
    md[std::string(format::kCryptoKeysKey)] = config->keys_meta.to_json_string();
    md[std::string(format::kEncryptionKey)] = encode_encryption_table(table);
    md[std::string(format::kPolicyKey)] = config->policy.to_json_string();
    const auto signed_header = sign_header(std::move(layout.header), config->sign_keypair);
    out.header_bytes = format::encode_header(signed_header);
    return out;
}

}  // namespace

Bytes serialize_bytes(std::span<const TensorInput> tensors, const SerializeConfig* config,
                      const format::Metadata& metadata) {
    auto parts = assemble(tensors, config, metadata);
    const auto prefix = format::length_prefix(parts.header_bytes.size());
    Bytes file(prefix.size() + parts.header_bytes.size() + parts.body.size());
    auto it = std::copy(prefix.begin(), prefix.end(), file.begin());
    it = std::copy(parts.header_bytes.begin(), parts.header_bytes.end(), it);
    std::copy(parts.body.begin(), parts.body.end(), it);
    return file;
}

void serialize_file(std::span<const TensorInput> tensors, const std::filesystem::path& path,
                    const SerializeConfig* config, const format::Metadata& metadata) {
    const auto parts = assemble(tensors, config, metadata);
    const auto prefix = format::length_prefix(parts.header_bytes.size());
    const ByteView views[] = {prefix, parts.header_bytes, parts.body};
    write_file_atomic(path, views);
}

}  // namespace ct
