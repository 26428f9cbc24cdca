#pragma once

// Wire forms of the protection envelope stored in "__metadata__".
//
//   __encryption__  {"<tensor>": {"alg":"A256GCM","iv":b64,"tag":b64,
//                                 "wrapped_key":b64,"key_iv":b64,"key_tag":b64}, ...}
//   __signature__   base64 Ed25519 signature over canonicalize(header minus __signature__)

#include <map>
#include <string>
#include <string_view>

#include "cryptotensors/crypto.hpp"
#include "cryptotensors/format.hpp"

namespace ct {

struct TensorEncryptionRecord {
    std::string alg{crypto::kAeadAlg};
    crypto::Iv iv{};
    crypto::AuthTag tag{};
    crypto::WrappedDek dek;
};

using EncryptionTable = std::map<std::string, TensorEncryptionRecord>;

std::string encode_encryption_table(const EncryptionTable& table);

/// Throws Error{MalformedMetadata} on bad JSON, missing fields or wrong decoded
/// lengths (12/16/32/12/16), Error{UnsupportedAlgorithm} for an unknown alg.
EncryptionTable parse_encryption_table(std::string_view json_text);

/// True when the header carries any reserved key. Such a file is verified as protected even
/// if "__crypto_keys__" itself is gone, so damaging that key cannot turn it into a plain file.
bool is_protected(const format::Header& header) noexcept;

/// canonicalize() of the header with "__signature__" removed.
std::string signing_payload(const format::Header& header);

/// Signs the header and returns it with "__signature__" set.
format::Header sign_header(format::Header header, const crypto::SignKeyPair& keypair);

/// Verifies "__signature__" against signing_payload(). Returns false for a wrong
/// signature; throws Error{MalformedSignature} when it is absent or not 64 bytes of base64.
bool verify_header_signature(const format::Header& header, const crypto::PublicKey& public_key);

}  // namespace ct
