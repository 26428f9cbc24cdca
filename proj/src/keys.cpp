#include "cryptotensors/keys.hpp"

#include <filesystem>

#include "cryptotensors/error.hpp"

namespace ct::keys {
namespace {

using json = nlohmann::json;

std::optional<Scheme> scheme_of(std::string_view uri) {
    if (uri.rfind("file://", 0) == 0) return Scheme::File;
    if (uri.rfind("http://", 0) == 0) return Scheme::Http;
    if (uri.rfind("https://", 0) == 0) return Scheme::Https;
    if (uri.rfind("kbs://", 0) == 0) return Scheme::Kbs;
    return std::nullopt;
}

std::string optional_string(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) throw Error(Errc::MalformedKeyRef, std::string(key) + " must be a string");
    return it->get<std::string>();
}

json parse_object(std::string_view text, Errc code, const char* what) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(code, std::string(what) + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(code, std::string(what) + " is not a JSON object");
    return doc;
}

}  // namespace

Scheme KeyRef::scheme() const {
    const auto s = scheme_of(uri);
    if (!s) throw Error(Errc::UnsupportedScheme, "unsupported key URI '" + uri + "'");
    return *s;
}

json KeyRef::to_json() const {
    json j = {{"kid", kid}, {"jku", uri}};
    if (!alg.empty()) j["alg"] = alg;
    if (!kty.empty()) j["kty"] = kty;
    if (!x5c.empty()) j["x5c"] = x5c;
    return j;
}

KeyRef key_ref_from_json(const json& jwk) {
    if (!jwk.is_object()) throw Error(Errc::MalformedKeyRef, "key descriptor is not a JSON object");
    KeyRef ref;
    ref.kid = optional_string(jwk, "kid");
    if (ref.kid.empty()) throw Error(Errc::MalformedKeyRef, "key descriptor lacks kid");
    ref.uri = optional_string(jwk, "jku");
    if (ref.uri.empty()) throw Error(Errc::MalformedKeyRef, "key descriptor '" + ref.kid + "' lacks jku");
    ref.alg = optional_string(jwk, "alg");
    ref.kty = optional_string(jwk, "kty");
    if (const auto it = jwk.find("x5c"); it != jwk.end()) {
        if (!it->is_array()) throw Error(Errc::MalformedKeyRef, "x5c must be an array");
        for (const auto& cert : *it) {
            if (!cert.is_string()) throw Error(Errc::MalformedKeyRef, "x5c entries must be strings");
            ref.x5c.push_back(cert.get<std::string>());
        }
    }
    ref.scheme();
    return ref;
}

KeyRef parse_key_ref(std::string_view jwk_json) {
    return key_ref_from_json(parse_object(jwk_json, Errc::MalformedKeyRef, "key descriptor"));
}

std::string CryptoKeysMeta::to_json_string() const {
    return json{{"version", version}, {"enc", enc.to_json()}, {"sign", sign.to_json()}}.dump();
}

CryptoKeysMeta CryptoKeysMeta::parse(std::string_view json_text) {
    const auto doc = parse_object(json_text, Errc::MalformedMetadata, "__crypto_keys__");
    const auto version = doc.find("version");
    if (version == doc.end() || !version->is_string()) {
        throw Error(Errc::MalformedMetadata, "__crypto_keys__ lacks a version string");
    }
    if (*version != "1") {
        throw Error(Errc::MalformedMetadata, "unsupported __crypto_keys__ version '" + version->get<std::string>() + "'");
    }
    const auto enc = doc.find("enc");
    const auto sign = doc.find("sign");
    if (enc == doc.end() || sign == doc.end()) throw Error(Errc::MalformedMetadata, "__crypto_keys__ needs enc and sign");
    CryptoKeysMeta meta;
    meta.version = version->get<std::string>();
    meta.enc = key_ref_from_json(*enc);
    meta.sign = key_ref_from_json(*sign);
    return meta;
}

KeyRef CryptoKeysMeta::parse_sign_ref(std::string_view json_text) {
    const auto doc = parse_object(json_text, Errc::MalformedMetadata, "__crypto_keys__");
    const auto sign = doc.find("sign");
    if (sign == doc.end()) throw Error(Errc::MalformedMetadata, "__crypto_keys__ lacks sign");
    return key_ref_from_json(*sign);
}

std::string KbsRequest::to_json_string() const {
    return json{{"header_b64", header_b64}, {"measurements", measurements}, {"kid", kid}}.dump();
}

KbsRequest KbsRequest::parse(std::string_view json_text) {
    const auto doc = parse_object(json_text, Errc::MalformedRequest, "key request");
    KbsRequest req;
    try {
        req.header_b64 = doc.at("header_b64").get<std::string>();
        req.kid = doc.at("kid").get<std::string>();
        if (const auto m = doc.find("measurements"); m != doc.end() && !m->is_null()) {
            req.measurements = m->get<policy::Measurements>();
        }
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRequest, e.what());
    }
    return req;
}

std::string KbsResponse::to_json_string() const {
    json j = json::object();
    if (key_b64) j["key_b64"] = *key_b64;
    if (error) j["error"] = {{"code", error->code}, {"reason", error->reason}};
    return j.dump();
}

KbsResponse KbsResponse::parse(std::string_view json_text) {
    const auto doc = parse_object(json_text, Errc::MalformedResponse, "key response");
    KbsResponse resp;
    try {
        if (const auto k = doc.find("key_b64"); k != doc.end()) resp.key_b64 = k->get<std::string>();
        if (const auto e = doc.find("error"); e != doc.end()) {
            resp.error = Failure{e->at("code").get<std::string>(), e->at("reason").get<std::string>()};
        }
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedResponse, e.what());
    }
    if (resp.key_b64.has_value() == resp.error.has_value()) {
        throw Error(Errc::MalformedResponse, "response must carry exactly one of key_b64 and error");
    }
    return resp;
}

std::string kbs_base_url(const std::string& kbs_uri, bool insecure_http) {
    if (kbs_uri.rfind("kbs://", 0) != 0) throw Error(Errc::UnsupportedScheme, "not a kbs:// URI: " + kbs_uri);
    auto rest = kbs_uri.substr(6);
    while (!rest.empty() && rest.back() == '/') rest.pop_back();
    if (rest.empty()) throw Error(Errc::MalformedKeyRef, "kbs:// URI lacks a host");
    return (insecure_http ? "http://" : "https://") + rest;
}

std::string file_uri_path(const std::string& uri) {
    if (uri.rfind("file://", 0) != 0) throw Error(Errc::UnsupportedScheme, "not a file:// URI: " + uri);
    return uri.substr(7);
}

KeyResolver::KeyResolver(ResolverOptions options) : options_(std::move(options)) {}

KeyResolver::~KeyResolver() {
    for (auto& [k, v] : cache_) crypto::secure_zero(v);
}

void KeyResolver::emit(std::string_view event) const {
    if (options_.on_event) options_.on_event(event);
}

std::size_t KeyResolver::fetch_count() const {
    std::lock_guard lock(mutex_);
    return fetches_;
}

Bytes KeyResolver::fetch(const KeyRef& ref, KeyUse use, const KbsContext* kbs) {
    ++fetches_;
    switch (ref.scheme()) {
        case Scheme::File: {
            const auto path = file_uri_path(ref.uri);
            emit("fetch_file");
            if (options_.read_file) return options_.read_file(path);
            std::error_code ec;
            if (!std::filesystem::is_regular_file(path, ec)) throw Error(Errc::NotFound, "key file not found: " + path);
            return read_file(path);
        }
        case Scheme::Http:
        case Scheme::Https:
            emit("fetch_http");
            if (options_.http_get) return options_.http_get(ref.uri);
            return http_get(ref.uri, options_.http);
        case Scheme::Kbs: {
            if (use != KeyUse::Encryption) {
                throw Error(Errc::UnsupportedScheme, "kbs:// serves master keys only, not signing keys");
            }
            if (kbs == nullptr) throw Error(Errc::InvalidArgument, "kbs:// resolution needs the header and measurements");
            KbsRequest req;
            req.header_b64 = base64_encode(kbs->raw_header);
            req.measurements = kbs->measurements;
            req.kid = ref.kid;
            const auto base = kbs_base_url(ref.uri, options_.allow_insecure_http);
            emit("kbs_fetch");
            const auto key = options_.kbs_fetch ? options_.kbs_fetch(base, req) : kbs_fetch(base, req, options_.http);
            return Bytes(key.view().begin(), key.view().end());
        }
    }
    throw Error(Errc::UnsupportedScheme, "unsupported key URI '" + ref.uri + "'");
}

Bytes KeyResolver::resolve(const KeyRef& ref, KeyUse use, const KbsContext* kbs) {
    std::lock_guard lock(mutex_);
    const auto cache_key = std::make_pair(use, ref.kid);
    if (const auto it = cache_.find(cache_key); it != cache_.end()) return it->second;

    Bytes key;
    if (use == KeyUse::Signing) {
        if (const auto it = options_.pinned_signing_keys.find(ref.kid); it != options_.pinned_signing_keys.end()) {
            key.assign(it->second.begin(), it->second.end());
        } else if (options_.trusted_signer_kids.count(ref.kid) != 0) {
            key = fetch(ref, use, kbs);
            if (key.size() != crypto::kPublicKeySize) {
                throw Error(Errc::LengthMismatch, "signing key '" + ref.kid + "' is " + std::to_string(key.size()) +
                                                      " bytes, expected 32");
            }
            if (crypto::key_id(key) != ref.kid) {
                throw Error(Errc::UntrustedSigningKey, "fetched signing key does not match kid '" + ref.kid + "'");
            }
        } else {
            throw Error(Errc::UntrustedSigningKey, "signing key '" + ref.kid + "' is not pinned or trusted");
        }
    } else {
        if (const auto it = options_.master_keys.find(ref.kid); it != options_.master_keys.end()) {
            key.assign(it->second.view().begin(), it->second.view().end());
        } else if (options_.fallback_master_key) {
            key.assign(options_.fallback_master_key->view().begin(), options_.fallback_master_key->view().end());
        } else {
            key = fetch(ref, use, kbs);
        }
        if (key.size() != crypto::kKeySize) {
            const auto n = key.size();
            crypto::secure_zero(key);
            throw Error(Errc::LengthMismatch,
                        "master key '" + ref.kid + "' is " + std::to_string(n) + " bytes, expected 32");
        }
    }
    cache_.emplace(cache_key, key);
    return key;
}

crypto::PublicKey KeyResolver::resolve_signing_key(const KeyRef& ref) {
    emit("resolve_signing_key");
    const auto bytes = resolve(ref, KeyUse::Signing);
    crypto::PublicKey pub{};
    std::copy(bytes.begin(), bytes.end(), pub.begin());
    return pub;
}

crypto::MasterKey KeyResolver::resolve_master_key(const KeyRef& ref, const KbsContext* kbs) {
    emit("resolve_master_key");
    auto bytes = resolve(ref, KeyUse::Encryption, kbs);
    crypto::MasterKey mk{crypto::Secret<crypto::kKeySize>(bytes), ref.kid};
    crypto::secure_zero(bytes);
    return mk;
}

}  // namespace ct::keys
