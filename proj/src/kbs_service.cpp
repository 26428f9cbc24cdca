#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "cryptotensors/kbs_service.hpp"

#include <httplib.h>

#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "cryptotensors/envelope.hpp"
#include "cryptotensors/error.hpp"
#include "cryptotensors/format.hpp"

namespace ct::kbs {
namespace {

using json = nlohmann::json;

Bytes decode_entry(const json& entry, const char* field, const std::string& kid) {
    const auto it = entry.find(field);
    if (it == entry.end() || !it->is_string()) {
        throw Error(Errc::MalformedKeystore, "entry '" + kid + "' lacks " + field);
    }
    try {
        return base64_decode(it->get_ref<const std::string&>());
    } catch (const Error&) {
        throw Error(Errc::MalformedKeystore, std::string(field) + " of '" + kid + "' is not valid base64");
    }
}

template <typename F>
void for_each_entry(const json& doc, const char* section, std::set<std::string>& seen, F&& f) {
    const auto it = doc.find(section);
    if (it == doc.end()) return;
    if (!it->is_array()) throw Error(Errc::MalformedKeystore, std::string(section) + " is not an array");
    for (const auto& entry : *it) {
        if (!entry.is_object()) throw Error(Errc::MalformedKeystore, std::string(section) + " entry is not an object");
        const auto kid = entry.find("kid");
        if (kid == entry.end() || !kid->is_string() || kid->get_ref<const std::string&>().empty()) {
            throw Error(Errc::MalformedKeystore, std::string(section) + " entry lacks kid");
        }
        const auto& k = kid->get_ref<const std::string&>();
        if (!seen.insert(k).second) throw Error(Errc::MalformedKeystore, "duplicate kid '" + k + "'");
        f(k, entry);
    }
}

}  // namespace

KeyStore parse_keystore(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedKeystore, e.what());
    }
    if (!doc.is_object()) throw Error(Errc::MalformedKeystore, "keystore is not a JSON object");

    KeyStore store;
    std::set<std::string> key_kids;
    std::set<std::string> signer_kids;
    for_each_entry(doc, "keys", key_kids, [&](const std::string& kid, const json& entry) {
        auto raw = decode_entry(entry, "key_b64", kid);
        if (raw.size() != crypto::kKeySize) {
            crypto::secure_zero(raw);
            throw Error(Errc::BadKeyLength, "key '" + kid + "' is " + std::to_string(raw.size()) + " bytes, expected 32");
        }
        store.keys.emplace(kid, crypto::Secret<crypto::kKeySize>(raw));
        crypto::secure_zero(raw);
    });
    for_each_entry(doc, "signers", signer_kids, [&](const std::string& kid, const json& entry) {
        const auto raw = decode_entry(entry, "pub_b64", kid);
        if (raw.size() != crypto::kPublicKeySize) {
            throw Error(Errc::BadKeyLength,
                        "signer '" + kid + "' is " + std::to_string(raw.size()) + " bytes, expected 32");
        }
        crypto::PublicKey pub{};
        std::copy(raw.begin(), raw.end(), pub.begin());
        store.signers.emplace(kid, pub);
    });
    return store;
}

KeyStore load_keystore(const std::filesystem::path& path) {
    auto raw = read_file(path);
    auto store = parse_keystore(as_chars(raw));
    crypto::secure_zero(raw);
    return store;
}

KeyBroker::KeyBroker(KeyStore store, policy::Clock clock, LogSink log, keys::EventSink on_event)
    : store_(std::move(store)), clock_(std::move(clock)), log_(std::move(log)), on_event_(std::move(on_event)) {}

void KeyBroker::register_evaluator(std::string lang, policy::ExternalEvaluator evaluator) {
    engine_.register_evaluator(std::move(lang), std::move(evaluator));
}

void KeyBroker::emit(std::string_view event) const {
    if (on_event_) on_event_(event);
}

void KeyBroker::log(const json& record) const {
    if (log_) log_(record.dump());
}

HttpReply KeyBroker::fail(int status, std::string_view code, const std::string& reason, const std::string& kid) const {
    log({{"event", "key_request"}, {"status", status}, {"code", code}, {"reason", reason}, {"kid", kid}});
    keys::KbsResponse resp;
    resp.error = keys::KbsResponse::Failure{std::string(code), reason};
    return {status, resp.to_json_string()};
}

HttpReply KeyBroker::handle_key_request(std::string_view body) const {
    keys::KbsRequest req;
    try {
        req = keys::KbsRequest::parse(body);
    } catch (const Error& e) {
        return fail(400, "MalformedRequest", e.detail(), "");
    }

    // A header that cannot be decoded cannot be authenticated either, so it lands in 401
    // along with bad signatures.
    format::Header header;
    keys::KeyRef sign_ref;
    try {
        const auto raw = base64_decode(req.header_b64);
        header = format::decode_header_json(as_chars(raw));
        const auto it = header.metadata.find(std::string(format::kCryptoKeysKey));
        if (it == header.metadata.end()) throw Error(Errc::MalformedMetadata, "header has no __crypto_keys__");
        sign_ref = keys::CryptoKeysMeta::parse_sign_ref(it->second);
    } catch (const Error& e) {
        return fail(401, "SignatureRejected", std::string("header not verifiable: ") + e.what(), req.kid);
    }

    const auto signer = store_.signers.find(sign_ref.kid);
    if (signer == store_.signers.end()) {
        return fail(401, "SignatureRejected", "unknown signer '" + sign_ref.kid + "'", req.kid);
    }
    emit("verify_signature");
    bool verified = false;
    try {
        verified = verify_header_signature(header, signer->second);
    } catch (const Error& e) {
        return fail(401, "SignatureRejected", e.what(), req.kid);
    }
    if (!verified) return fail(401, "SignatureRejected", "header signature does not verify", req.kid);

    keys::CryptoKeysMeta meta;
    policy::PolicyDoc doc;
    try {
        meta = keys::CryptoKeysMeta::parse(header.metadata.at(std::string(format::kCryptoKeysKey)));
        if (const auto it = header.metadata.find(std::string(format::kPolicyKey)); it != header.metadata.end()) {
            doc = policy::PolicyDoc::parse(it->second);
        }
    } catch (const Error& e) {
        return fail(400, "MalformedRequest", e.what(), req.kid);
    }
    if (req.kid != meta.enc.kid) {
        return fail(400, "MalformedRequest", "requested kid '" + req.kid + "' is not the header's enc kid", req.kid);
    }

    emit("evaluate_remote_policy");
    policy::Decision decision;
    try {
        decision = engine_.evaluate(doc.remote, req.measurements, clock_());
    } catch (const Error& e) {
        decision = policy::Decision::denied(e.what());
    }
    if (!decision.allow) return fail(403, "PolicyDenied", decision.reason, req.kid);

    const auto key = store_.keys.find(meta.enc.kid);
    if (key == store_.keys.end()) return fail(404, "UnknownKeyId", "no key for kid '" + meta.enc.kid + "'", req.kid);

    emit("release_key");
    log({{"event", "key_request"}, {"status", 200}, {"kid", req.kid}, {"signer", sign_ref.kid}});
    keys::KbsResponse resp;
    resp.key_b64 = base64_encode(key->second.view());
    return {200, resp.to_json_string()};
}

struct Server::Impl {
    std::unique_ptr<httplib::Server> http;
    std::thread thread;
    std::mutex mutex;
    std::shared_ptr<const KeyBroker> broker;

    std::shared_ptr<const KeyBroker> current() {
        std::lock_guard lock(mutex);
        return broker;
    }
};

Server::Server(ServiceConfig config) : impl_(std::make_unique<Impl>()), config_(std::move(config)) {
    if (config_.insecure_http) {
        impl_->http = std::make_unique<httplib::Server>();
    } else {
        if (config_.tls_cert.empty() || config_.tls_key.empty()) {
            throw Error(Errc::InvalidArgument, "TLS certificate and key are required unless insecure_http is set");
        }
        auto tls = std::make_unique<httplib::SSLServer>(config_.tls_cert.c_str(), config_.tls_key.c_str());
        if (!tls->is_valid()) throw Error(Errc::IoError, "cannot load TLS certificate or key");
        impl_->http = std::move(tls);
    }

    auto* impl = impl_.get();
    impl_->http->Get("/v1/health", [impl](const httplib::Request&, httplib::Response& res) {
        const bool ready = impl->current() != nullptr;
        res.status = ready ? 200 : 503;
        res.set_content(json{{"status", ready ? "ok" : "loading"}, {"protocol", kProtocolVersion}}.dump(),
                        "application/json");
    });
    impl_->http->Post("/v1/key", [impl](const httplib::Request& req, httplib::Response& res) {
        const auto broker = impl->current();
        if (!broker) {
            res.status = 503;
            keys::KbsResponse resp;
            resp.error = keys::KbsResponse::Failure{"Unavailable", "keystore not loaded"};
            res.set_content(resp.to_json_string(), "application/json");
            return;
        }
        const auto reply = broker->handle_key_request(req.body);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });
}

Server::~Server() { stop(); }

void Server::set_broker(std::shared_ptr<const KeyBroker> broker) {
    std::lock_guard lock(impl_->mutex);
    impl_->broker = std::move(broker);
}

namespace {

int bind(httplib::Server& http, const ServiceConfig& config) {
    if (config.port == 0) {
        const int port = http.bind_to_any_port(config.host);
        if (port < 0) throw Error(Errc::IoError, "cannot bind " + config.host);
        return port;
    }
    if (!http.bind_to_port(config.host, config.port)) {
        throw Error(Errc::IoError, "cannot bind " + config.host + ":" + std::to_string(config.port));
    }
    return config.port;
}

}  // namespace

void Server::start() {
    port_ = bind(*impl_->http, config_);
    impl_->thread = std::thread([this] { impl_->http->listen_after_bind(); });
    impl_->http->wait_until_ready();
}

void Server::run() {
    port_ = bind(*impl_->http, config_);
    impl_->http->listen_after_bind();
}

void Server::stop() {
    if (impl_->http) impl_->http->stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string Server::base_url() const {
    return std::string(config_.insecure_http ? "http" : "https") + "://" + config_.host + ":" + std::to_string(port_);
}

}  // namespace ct::kbs
