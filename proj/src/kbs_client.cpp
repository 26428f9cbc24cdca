#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "cryptotensors/error.hpp"
#include "cryptotensors/keys.hpp"

namespace ct::keys {
namespace {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::UnsupportedScheme, "not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Client make_client(const std::string& origin, const HttpOptions& options) {
    httplib::Client cli(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    return cli;
}

std::string server_reason(const httplib::Result& res) {
    try {
        const auto resp = KbsResponse::parse(res->body);
        if (resp.error) return resp.error->reason;
    } catch (const Error&) {
    }
    return res->body.empty() ? "HTTP " + std::to_string(res->status) : res->body;
}

}  // namespace

Bytes http_get(const std::string& url, const HttpOptions& options) {
    const auto parts = split_url(url);
    auto cli = make_client(parts.origin, options);
    const auto res = cli.Get(parts.path);
    if (!res) throw Error(Errc::NetworkError, "GET " + url + " failed: " + httplib::to_string(res.error()));
    if (res->status == 404) throw Error(Errc::NotFound, "GET " + url + " returned 404");
    if (res->status != 200) throw Error(Errc::NetworkError, "GET " + url + " returned " + std::to_string(res->status));
    return Bytes(res->body.begin(), res->body.end());
}

crypto::Secret<crypto::kKeySize> kbs_fetch(const std::string& base_url, const KbsRequest& request,
                                           const HttpOptions& options) {
    const auto parts = split_url(base_url);
    auto path = parts.path;
    if (!path.empty() && path.back() == '/') path.pop_back();
    path += "/v1/key";
    auto cli = make_client(parts.origin, options);
    const auto res = cli.Post(path, request.to_json_string(), "application/json");
    if (!res) throw Error(Errc::NetworkError, "KBS request to " + base_url + " failed: " + httplib::to_string(res.error()));
    switch (res->status) {
        case 200: break;
        case 401: throw Error(Errc::KbsSignatureRejected, server_reason(res));
        case 403: throw Error(Errc::KbsDenied, server_reason(res));
        case 404: throw Error(Errc::NotFound, server_reason(res));
        default:
            throw Error(Errc::NetworkError, "KBS returned " + std::to_string(res->status) + ": " + server_reason(res));
    }
    const auto resp = KbsResponse::parse(res->body);
    if (!resp.key_b64) throw Error(Errc::MalformedResponse, "KBS success response without key_b64");
    Bytes key;
    try {
        key = base64_decode(*resp.key_b64);
    } catch (const Error&) {
        throw Error(Errc::MalformedResponse, "key_b64 is not valid base64");
    }
    if (key.size() != crypto::kKeySize) {
        crypto::secure_zero(key);
        throw Error(Errc::MalformedResponse, "KBS returned a key that is not 32 bytes");
    }
    crypto::Secret<crypto::kKeySize> out(key);
    crypto::secure_zero(key);
    return out;
}

}  // namespace ct::keys
