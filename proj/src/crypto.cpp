#include "cryptotensors/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <climits>
#include <memory>

#include "cryptotensors/error.hpp"

namespace ct::crypto {
namespace {

struct CipherCtxFree {
    void operator()(EVP_CIPHER_CTX* ctx) const noexcept { EVP_CIPHER_CTX_free(ctx); }
};
struct PkeyFree {
    void operator()(EVP_PKEY* key) const noexcept { EVP_PKEY_free(key); }
};
struct MdCtxFree {
    void operator()(EVP_MD_CTX* ctx) const noexcept { EVP_MD_CTX_free(ctx); }
};

using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;
using Pkey = std::unique_ptr<EVP_PKEY, PkeyFree>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;

// EVP update calls take int lengths.
constexpr std::size_t kChunk = std::size_t{1} << 30;

CipherCtx gcm_context(bool encrypt, ByteView key, const Iv& iv) {
    if (key.size() != kKeySize) throw Error(Errc::InvalidArgument, "AES-256-GCM key must be 32 bytes");
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw std::bad_alloc();
    const auto init = encrypt ? EVP_EncryptInit_ex : EVP_DecryptInit_ex;
    if (init(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(kIvSize), nullptr) != 1 ||
        init(ctx.get(), nullptr, nullptr, key.data(), iv.data()) != 1) {
        throw Error(Errc::InvalidArgument, "cannot initialise AES-256-GCM");
    }
    return ctx;
}

void feed_aad(EVP_CIPHER_CTX* ctx, bool encrypt, ByteView aad) {
    const auto update = encrypt ? EVP_EncryptUpdate : EVP_DecryptUpdate;
    for (std::size_t off = 0; off < aad.size(); off += kChunk) {
        const auto n = static_cast<int>(std::min(kChunk, aad.size() - off));
        int outl = 0;
        if (update(ctx, nullptr, &outl, aad.data() + off, n) != 1) throw Error(Errc::InvalidArgument, "GCM AAD update failed");
    }
}

Pkey ed25519_private(ByteView seed) {
    if (seed.size() != kKeySize) throw Error(Errc::InvalidArgument, "Ed25519 seed must be 32 bytes");
    Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
    if (!key) throw Error(Errc::InvalidArgument, "cannot load Ed25519 private key");
    return key;
}

}  // namespace

void secure_zero(std::span<std::uint8_t> bytes) noexcept {
    if (!bytes.empty()) OPENSSL_cleanse(bytes.data(), bytes.size());
}

void detail::throw_bad_key_length(std::size_t expected, std::size_t actual) {
    throw Error(Errc::LengthMismatch,
                "expected " + std::to_string(expected) + "-byte key, got " + std::to_string(actual) + " bytes");
}

SignKeyPair SignKeyPair::from_seed(ByteView seed) {
    SignKeyPair kp;
    kp.seed = Secret<kKeySize>(seed);
    kp.public_key = derive_public_key(seed);
    return kp;
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
    for (std::size_t off = 0; off < out.size(); off += kChunk) {
        const auto n = static_cast<int>(std::min(kChunk, out.size() - off));
        if (RAND_bytes(out.data() + off, n) != 1) throw Error(Errc::RandomnessUnavailable, "RAND_bytes failed");
    }
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i < out.size()) {
        auto word = engine_();
        for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
            out[i] = static_cast<std::uint8_t>(word);
            word >>= 8;
        }
    }
}

RandomSource& system_random() {
    static SystemRandom rng;
    return rng;
}

Dek generate_dek(RandomSource& rng) {
    Dek dek;
    rng.fill(dek.mutable_view());
    return dek;
}

Iv generate_iv(RandomSource& rng) {
    Iv iv{};
    rng.fill(iv);
    return iv;
}

SignKeyPair generate_sign_keypair(RandomSource& rng) {
    Secret<kKeySize> seed;
    rng.fill(seed.mutable_view());
    return SignKeyPair::from_seed(seed.view());
}

void require_aead_alg(std::string_view alg) {
    if (alg != kAeadAlg) throw Error(Errc::UnsupportedAlgorithm, "unsupported encryption algorithm '" + std::string(alg) + "'");
}

void require_sign_alg(std::string_view alg) {
    if (alg != kSignAlg) throw Error(Errc::UnsupportedAlgorithm, "unsupported signature algorithm '" + std::string(alg) + "'");
}

AuthTag aead_encrypt_into(ByteView key, const Iv& iv, ByteView aad, ByteView plaintext, std::span<std::uint8_t> out) {
    if (out.size() != plaintext.size()) throw Error(Errc::InvalidArgument, "ciphertext buffer size differs from plaintext");
    auto ctx = gcm_context(true, key, iv);
    feed_aad(ctx.get(), true, aad);
    for (std::size_t off = 0; off < plaintext.size(); off += kChunk) {
        const auto n = static_cast<int>(std::min(kChunk, plaintext.size() - off));
        int outl = 0;
        if (EVP_EncryptUpdate(ctx.get(), out.data() + off, &outl, plaintext.data() + off, n) != 1 || outl != n) {
            throw Error(Errc::InvalidArgument, "GCM encrypt update failed");
        }
    }
    int outl = 0;
    AuthTag tag{};
    if (EVP_EncryptFinal_ex(ctx.get(), tag.data(), &outl) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(kTagSize), tag.data()) != 1) {
        throw Error(Errc::InvalidArgument, "GCM finalisation failed");
    }
    return tag;
}

Sealed aead_encrypt(ByteView key, const Iv& iv, ByteView aad, ByteView plaintext) {
    Sealed sealed;
    sealed.ciphertext.resize(plaintext.size());
    sealed.tag = aead_encrypt_into(key, iv, aad, plaintext, sealed.ciphertext);
    return sealed;
}

void aead_decrypt_into(ByteView key, const Iv& iv, ByteView aad, ByteView ciphertext, const AuthTag& tag,
                       std::span<std::uint8_t> out) {
    if (out.size() != ciphertext.size()) throw Error(Errc::InvalidArgument, "plaintext buffer size differs from ciphertext");
    auto ctx = gcm_context(false, key, iv);
    feed_aad(ctx.get(), false, aad);
    for (std::size_t off = 0; off < ciphertext.size(); off += kChunk) {
        const auto n = static_cast<int>(std::min(kChunk, ciphertext.size() - off));
        int outl = 0;
        if (EVP_DecryptUpdate(ctx.get(), out.data() + off, &outl, ciphertext.data() + off, n) != 1 || outl != n) {
            secure_zero(out);
            throw Error(Errc::AuthenticationFailed, "authentication failed");
        }
    }
    AuthTag expected = tag;
    int outl = 0;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(kTagSize), expected.data()) != 1 ||
        EVP_DecryptFinal_ex(ctx.get(), nullptr, &outl) != 1) {
        secure_zero(out);
        throw Error(Errc::AuthenticationFailed, "authentication failed");
    }
}

Bytes aead_decrypt(ByteView key, const Iv& iv, ByteView aad, ByteView ciphertext, const AuthTag& tag) {
    Bytes out(ciphertext.size());
    aead_decrypt_into(key, iv, aad, ciphertext, tag, out);
    return out;
}

WrappedDek wrap_dek(const MasterKey& master, const Dek& dek, ByteView aad, RandomSource& rng) {
    WrappedDek wrapped;
    wrapped.key_iv = generate_iv(rng);
    wrapped.key_tag = aead_encrypt_into(master.key.view(), wrapped.key_iv, aad, dek.view(), wrapped.wrapped_key);
    return wrapped;
}

Dek unwrap_dek(const MasterKey& master, const WrappedDek& wrapped, ByteView aad) {
    Dek dek;
    aead_decrypt_into(master.key.view(), wrapped.key_iv, aad, wrapped.wrapped_key, wrapped.key_tag, dek.mutable_view());
    return dek;
}

Signature sign_header(const SignKeyPair& keypair, ByteView canonical_bytes) {
    auto key = ed25519_private(keypair.seed.view());
    MdCtx md(EVP_MD_CTX_new());
    if (!md) throw std::bad_alloc();
    Signature sig{};
    std::size_t len = sig.size();
    if (EVP_DigestSignInit(md.get(), nullptr, nullptr, nullptr, key.get()) != 1 ||
        EVP_DigestSign(md.get(), sig.data(), &len, canonical_bytes.data(), canonical_bytes.size()) != 1 ||
        len != sig.size()) {
        throw Error(Errc::InvalidArgument, "Ed25519 signing failed");
    }
    return sig;
}

bool verify_header(const PublicKey& public_key, ByteView canonical_bytes, ByteView signature) {
    if (signature.size() != kSignatureSize) {
        throw Error(Errc::MalformedSignature, "signature must be 64 bytes, got " + std::to_string(signature.size()));
    }
    Pkey key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(), public_key.size()));
    if (!key) return false;
    MdCtx md(EVP_MD_CTX_new());
    if (!md) throw std::bad_alloc();
    if (EVP_DigestVerifyInit(md.get(), nullptr, nullptr, nullptr, key.get()) != 1) return false;
    return EVP_DigestVerify(md.get(), signature.data(), signature.size(), canonical_bytes.data(),
                            canonical_bytes.size()) == 1;
}

bool verify_header_b64(const PublicKey& public_key, ByteView canonical_bytes, std::string_view signature_b64) {
    Bytes sig;
    try {
        sig = base64_decode(signature_b64);
    } catch (const Error&) {
        throw Error(Errc::MalformedSignature, "signature is not valid base64");
    }
    return verify_header(public_key, canonical_bytes, sig);
}

PublicKey derive_public_key(ByteView seed) {
    auto key = ed25519_private(seed);
    PublicKey pub{};
    std::size_t len = pub.size();
    if (EVP_PKEY_get_raw_public_key(key.get(), pub.data(), &len) != 1 || len != pub.size()) {
        throw Error(Errc::InvalidArgument, "cannot derive Ed25519 public key");
    }
    return pub;
}

std::array<std::uint8_t, 32> sha256(ByteView data) {
    std::array<std::uint8_t, 32> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(Errc::InvalidArgument, "SHA-256 failed");
    }
    return digest;
}

std::string key_id(ByteView key_material) {
    const auto digest = sha256(key_material);
    return hex_encode(ByteView(digest).first(8));
}

}  // namespace ct::crypto
