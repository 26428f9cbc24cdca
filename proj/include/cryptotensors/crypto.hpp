#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "cryptotensors/bytes.hpp"

namespace ct::crypto {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kIvSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kSignatureSize = 64;
inline constexpr std::size_t kPublicKeySize = 32;

inline constexpr std::string_view kAeadAlg = "A256GCM";
inline constexpr std::string_view kSignAlg = "Ed25519";

using Iv = std::array<std::uint8_t, kIvSize>;
using AuthTag = std::array<std::uint8_t, kTagSize>;
using Signature = std::array<std::uint8_t, kSignatureSize>;
using PublicKey = std::array<std::uint8_t, kPublicKeySize>;
using WrappedKey = std::array<std::uint8_t, kKeySize>;

void secure_zero(std::span<std::uint8_t> bytes) noexcept;

namespace detail {
[[noreturn]] void throw_bad_key_length(std::size_t expected, std::size_t actual);
}

/// Fixed-size secret, wiped when destroyed or overwritten.
template <std::size_t N>
class Secret {
public:
    Secret() = default;
    explicit Secret(ByteView bytes);
    Secret(const Secret& other) : bytes_(other.bytes_) {}
    Secret& operator=(const Secret& other) {
        if (this != &other) bytes_ = other.bytes_;
        return *this;
    }
    ~Secret() { secure_zero(bytes_); }

    static constexpr std::size_t size() noexcept { return N; }
    ByteView view() const noexcept { return bytes_; }
    std::span<std::uint8_t> mutable_view() noexcept { return bytes_; }

    friend bool operator==(const Secret& a, const Secret& b) noexcept { return a.bytes_ == b.bytes_; }

private:
    std::array<std::uint8_t, N> bytes_{};
};

template <std::size_t N>
Secret<N>::Secret(ByteView bytes) {
    if (bytes.size() != N) detail::throw_bad_key_length(N, bytes.size());
    std::copy(bytes.begin(), bytes.end(), bytes_.begin());
}

using Dek = Secret<kKeySize>;

struct MasterKey {
    Secret<kKeySize> key;
    std::string kid;
};

struct SignKeyPair {
    Secret<kKeySize> seed;
    PublicKey public_key{};

    static SignKeyPair from_seed(ByteView seed);
};

/// Source of key material and nonces. Injected so tests can make output reproducible.
class RandomSource {
public:
    virtual ~RandomSource() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;
};

/// OpenSSL's CSPRNG. Throws Error{RandomnessUnavailable} if it cannot be seeded.
class SystemRandom final : public RandomSource {
public:
    void fill(std::span<std::uint8_t> out) override;
};

/// Deterministic stream for tests and benchmarks. Not for protecting real data.
class SeededRandom final : public RandomSource {
public:
    explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
    void fill(std::span<std::uint8_t> out) override;

private:
    std::mt19937_64 engine_;
};

RandomSource& system_random();

Dek generate_dek(RandomSource& rng = system_random());
Iv generate_iv(RandomSource& rng = system_random());
SignKeyPair generate_sign_keypair(RandomSource& rng = system_random());

/// Throws Error{UnsupportedAlgorithm} unless alg is one of the v1 identifiers.
void require_aead_alg(std::string_view alg);
void require_sign_alg(std::string_view alg);

/// AES-256-GCM. The ciphertext is written to `out`, which must be exactly as long as
/// the plaintext; the tag is returned separately.
AuthTag aead_encrypt_into(ByteView key, const Iv& iv, ByteView aad, ByteView plaintext, std::span<std::uint8_t> out);

struct Sealed {
    Bytes ciphertext;
    AuthTag tag{};
};

Sealed aead_encrypt(ByteView key, const Iv& iv, ByteView aad, ByteView plaintext);

/// Throws Error{AuthenticationFailed} on any mismatch, after wiping `out`.
void aead_decrypt_into(ByteView key, const Iv& iv, ByteView aad, ByteView ciphertext, const AuthTag& tag,
                       std::span<std::uint8_t> out);

Bytes aead_decrypt(ByteView key, const Iv& iv, ByteView aad, ByteView ciphertext, const AuthTag& tag);

struct WrappedDek {
    WrappedKey wrapped_key{};
    Iv key_iv{};
    AuthTag key_tag{};
};

WrappedDek wrap_dek(const MasterKey& master, const Dek& dek, ByteView aad, RandomSource& rng = system_random());
Dek unwrap_dek(const MasterKey& master, const WrappedDek& wrapped, ByteView aad);

Signature sign_header(const SignKeyPair& keypair, ByteView canonical_bytes);

/// True iff `signature` is a valid Ed25519 signature over exactly these bytes.
/// Throws Error{MalformedSignature} when the signature is not 64 bytes.
bool verify_header(const PublicKey& public_key, ByteView canonical_bytes, ByteView signature);

/// Same, for the base64 form embedded in headers.
bool verify_header_b64(const PublicKey& public_key, ByteView canonical_bytes, std::string_view signature_b64);

PublicKey derive_public_key(ByteView seed);
std::array<std::uint8_t, 32> sha256(ByteView data);

/// Hex of the first 8 bytes of SHA-256 over the key. Used as the default kid.
std::string key_id(ByteView key_material);

}  // namespace ct::crypto
