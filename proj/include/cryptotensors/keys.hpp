#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptotensors/bytes.hpp"
#include "cryptotensors/crypto.hpp"
#include "cryptotensors/policy.hpp"

namespace ct::keys {

enum class Scheme { File, Http, Https, Kbs };

/// JWK-style key descriptor. The wire field "jku" carries the key URI.
struct KeyRef {
    std::string kid;
    std::string uri;
    std::string alg;
    std::string kty;
    std::vector<std::string> x5c;  // surfaced, not path-validated

    Scheme scheme() const;
    nlohmann::json to_json() const;
    friend bool operator==(const KeyRef&, const KeyRef&) = default;
};

/// Throws Error{MalformedKeyRef | UnsupportedScheme}.
KeyRef parse_key_ref(std::string_view jwk_json);
KeyRef key_ref_from_json(const nlohmann::json& jwk);

/// The "__crypto_keys__" document.
struct CryptoKeysMeta {
    std::string version = "1";
    KeyRef enc;
    KeyRef sign;

    std::string to_json_string() const;
    /// Throws Error{MalformedMetadata} for a bad document or version != "1",
    /// or the KeyRef errors for bad descriptors.
    static CryptoKeysMeta parse(std::string_view json_text);
    /// Only the "sign" descriptor, for verifying the header before trusting anything else.
    static KeyRef parse_sign_ref(std::string_view json_text);
    friend bool operator==(const CryptoKeysMeta&, const CryptoKeysMeta&) = default;
};

struct KbsRequest {
    std::string header_b64;  // raw header JSON bytes, signature included
    policy::Measurements measurements;
    std::string kid;

    std::string to_json_string() const;
    /// Throws Error{MalformedRequest}.
    static KbsRequest parse(std::string_view json_text);
};

struct KbsResponse {
    struct Failure {
        std::string code;
        std::string reason;
    };
    std::optional<std::string> key_b64;
    std::optional<Failure> error;

    std::string to_json_string() const;
    /// Throws Error{MalformedResponse} unless exactly one of key_b64 / error is present.
    static KbsResponse parse(std::string_view json_text);
};

struct HttpOptions {
    std::chrono::milliseconds timeout{10'000};
};

/// POST {base}/v1/key. 200 -> 32-byte key; 401 -> KbsSignatureRejected; 403 -> KbsDenied
/// (detail is the server's reason); transport failures -> NetworkError.
crypto::Secret<crypto::kKeySize> kbs_fetch(const std::string& base_url, const KbsRequest& request,
                                           const HttpOptions& options = {});

/// Raw body of a GET. 404 -> NotFound, transport failures -> NetworkError.
Bytes http_get(const std::string& url, const HttpOptions& options = {});

/// kbs://host[:port]/path -> https://host[:port]/path, or http:// when insecure is set.
std::string kbs_base_url(const std::string& kbs_uri, bool insecure_http);

/// "file:///a/b" -> "/a/b". Relative forms ("file://a/b") are accepted as "a/b".
std::string file_uri_path(const std::string& uri);

enum class KeyUse { Signing, Encryption };

/// What a kbs:// fetch needs to send along.
struct KbsContext {
    ByteView raw_header;
    policy::Measurements measurements;
};

using EventSink = std::function<void(std::string_view)>;

struct ResolverOptions {
    /// Signing keys trusted by kid. Used without any fetch.
    std::map<std::string, crypto::PublicKey> pinned_signing_keys;
    /// Signing kids whose keys may be fetched from the descriptor's URI; the fetched key
    /// is accepted only if its key_id() equals the kid.
    std::set<std::string> trusted_signer_kids;
    /// Master keys supplied out of band, by kid. Consulted before the descriptor's URI.
    std::map<std::string, crypto::Secret<crypto::kKeySize>> master_keys;
    /// Master key used for any kid not found above (e.g. an operator-supplied key file).
    std::optional<crypto::Secret<crypto::kKeySize>> fallback_master_key;

    bool allow_insecure_http = false;  // kbs:// over plain HTTP; tests only
    HttpOptions http;

    // Transport overrides, mainly for tests. Defaults use the filesystem / cpp-httplib.
    std::function<Bytes(const std::string& path)> read_file;
    std::function<Bytes(const std::string& url)> http_get;
    std::function<crypto::Secret<crypto::kKeySize>(const std::string& base_url, const KbsRequest&)> kbs_fetch;

    EventSink on_event;
};

/// Resolves KeyRefs to key bytes. Results are cached by (use, kid) for the resolver's
/// lifetime, so a master key is fetched at most once per resolver.
class KeyResolver {
public:
    explicit KeyResolver(ResolverOptions options);
    ~KeyResolver();
    KeyResolver(const KeyResolver&) = delete;
    KeyResolver& operator=(const KeyResolver&) = delete;

    /// Public key for verifying headers. Throws Error{UntrustedSigningKey} when the kid is
    /// neither pinned nor trusted for fetching.
    crypto::PublicKey resolve_signing_key(const KeyRef& ref);

    /// Master key. kbs:// refs need a context. Throws LengthMismatch, NotFound,
    /// NetworkError, KbsDenied, KbsSignatureRejected.
    crypto::MasterKey resolve_master_key(const KeyRef& ref, const KbsContext* kbs = nullptr);

    /// Raw bytes for either use, with the same caching.
    Bytes resolve(const KeyRef& ref, KeyUse use, const KbsContext* kbs = nullptr);

    /// Number of fetches that went past the cache (file reads, HTTP, KBS).
    std::size_t fetch_count() const;

private:
    Bytes fetch(const KeyRef& ref, KeyUse use, const KbsContext* kbs);
    void emit(std::string_view event) const;

    ResolverOptions options_;
    mutable std::mutex mutex_;
    std::map<std::pair<KeyUse, std::string>, Bytes> cache_;
    std::size_t fetches_ = 0;
};

}  // namespace ct::keys
