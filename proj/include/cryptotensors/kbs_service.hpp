#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "cryptotensors/crypto.hpp"
#include "cryptotensors/keys.hpp"
#include "cryptotensors/policy.hpp"

namespace ct::kbs {

inline constexpr std::string_view kProtocolVersion = "1";

/// Immutable after load. Keys are master keys by kid; signers are trusted header signers.
struct KeyStore {
    std::map<std::string, crypto::Secret<crypto::kKeySize>> keys;
    std::map<std::string, crypto::PublicKey> signers;
};

/// {"keys":[{"kid","key_b64"}],"signers":[{"kid","pub_b64"}]}.
/// Throws Error{MalformedKeystore | BadKeyLength}.
KeyStore parse_keystore(std::string_view json_text);
KeyStore load_keystore(const std::filesystem::path& path);

struct HttpReply {
    int status = 200;
    std::string body;
};

/// One structured log record as a JSON object string. Never carries key bytes.
using LogSink = std::function<void(const std::string& json_line)>;

/// Request handling without any transport; the HTTP server is a thin shell over this.
class KeyBroker {
public:
    KeyBroker(KeyStore store, policy::Clock clock = policy::system_clock(), LogSink log = {},
              keys::EventSink on_event = {});

    void register_evaluator(std::string lang, policy::ExternalEvaluator evaluator);

    /// Steps, in order: parse (400) -> signer lookup and signature (401) -> kid check (400)
    /// -> remote policy (403) -> key lookup (404) -> 200 {"key_b64"}.
    /// Events: "verify_signature", "evaluate_remote_policy", "release_key".
    HttpReply handle_key_request(std::string_view body) const;

    const KeyStore& store() const noexcept { return store_; }

private:
    HttpReply fail(int status, std::string_view code, const std::string& reason, const std::string& kid) const;
    void log(const nlohmann::json& record) const;
    void emit(std::string_view event) const;

    KeyStore store_;
    policy::Clock clock_;
    LogSink log_;
    keys::EventSink on_event_;
    policy::PolicyEngine engine_;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    /// Serve plain HTTP. Refused unless set; meant for loopback tests only.
    bool insecure_http = false;
    std::filesystem::path tls_cert;
    std::filesystem::path tls_key;
};

/// GET /v1/health and POST /v1/key on a background thread. Health answers 503 until a
/// broker is installed.
class Server {
public:
    explicit Server(ServiceConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    void set_broker(std::shared_ptr<const KeyBroker> broker);
    /// Binds and starts serving. Throws Error{IoError} when the socket cannot be bound.
    void start();
    /// Blocks the calling thread until stop().
    void run();
    void stop();
    int port() const noexcept { return port_; }
    /// "http://127.0.0.1:port" or "https://...".
    std::string base_url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    ServiceConfig config_;
    int port_ = 0;
};

}  // namespace ct::kbs
