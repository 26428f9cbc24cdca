#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cryptotensors/crypto.hpp"
#include "cryptotensors/envelope.hpp"
#include "cryptotensors/format.hpp"
#include "cryptotensors/keys.hpp"
#include "cryptotensors/policy.hpp"

namespace ct {

/// A tensor to be written. `data` is borrowed and never modified.
struct TensorInput {
    std::string name;
    format::Dtype dtype = format::Dtype::U8;
    format::Shape shape;
    ByteView data;
};

struct EncryptSelection {
    enum class Kind { All, None, Names };
    Kind kind = Kind::All;
    std::vector<std::string> names;

    static EncryptSelection all() { return {Kind::All, {}}; }
    static EncryptSelection none() { return {Kind::None, {}}; }
    static EncryptSelection only(std::vector<std::string> names) { return {Kind::Names, std::move(names)}; }
};

struct SerializeConfig {
    std::string enc_alg{crypto::kAeadAlg};
    crypto::MasterKey master_key;
    crypto::SignKeyPair sign_keypair;
    keys::CryptoKeysMeta keys_meta;
    EncryptSelection encrypt_selection;
    policy::PolicyDoc policy;
    format::Metadata extra_metadata;
    /// Source for DEKs and IVs; the OS CSPRNG when null.
    crypto::RandomSource* random = nullptr;
};

/// Without a config: a plain container with no reserved metadata. With one: selected
/// tensors encrypted in place of their plaintext (same offsets), the envelope added to
/// "__metadata__", and the header signed.
///
/// Throws UnknownTensorInSelection, MetadataKeyCollision, SizeMismatch, plus the
/// build_header errors.
Bytes serialize_bytes(std::span<const TensorInput> tensors, const SerializeConfig* config = nullptr,
                      const format::Metadata& metadata = {});

/// Same bytes as serialize_bytes, written via a temporary file and an atomic rename.
void serialize_file(std::span<const TensorInput> tensors, const std::filesystem::path& path,
                    const SerializeConfig* config = nullptr, const format::Metadata& metadata = {});

}  // namespace ct
