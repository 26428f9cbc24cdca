#include <doctest.h>

#include <nlohmann/json.hpp>

#include "cryptotensors/error.hpp"
#include "cryptotensors/kbs_service.hpp"
#include "cryptotensors/loader.hpp"
#include "fixtures.hpp"

using namespace ct;
using nlohmann::json;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return Errc::InvalidArgument;
}

kbs::KeyStore store_for(const testing::TestKeys& k) {
    kbs::KeyStore s;
    s.keys.emplace(k.master.kid, k.master.key);
    s.signers.emplace(k.meta.sign.kid, k.signer.public_key);
    return s;
}

/// A signed header carrying `remote` as the remote policy.
Bytes signed_header(const testing::TestKeys& k, const std::string& remote) {
    const Bytes d(4, 1);
    const TensorInput t[] = {{"w", format::Dtype::U8, {4}, d}};
    auto c = testing::make_config(k);
    if (!remote.empty()) c.policy.remote = policy::PolicyText{"ct-json-v1", remote};
    const auto file = serialize_bytes(t, &c);
    const auto raw = format::split_file(file);
    return Bytes(raw.header_bytes.begin(), raw.header_bytes.end());
}

std::string request(const Bytes& header, const std::string& kid, policy::Measurements m = {}) {
    return keys::KbsRequest{base64_encode(header), std::move(m), kid}.to_json_string();
}

std::string error_code(const kbs::HttpReply& r) { return json::parse(r.body).at("error").at("code"); }

}  // namespace

TEST_CASE("keystore parsing") {
    const auto k = testing::make_keys();
    const auto key_b64 = base64_encode(k.master.key.view());
    const auto pub_b64 = base64_encode(k.signer.public_key);
    const auto good = json{{"keys", {{{"kid", "m"}, {"key_b64", key_b64}}}},
                           {"signers", {{{"kid", "s"}, {"pub_b64", pub_b64}}}}}
                          .dump();
    const auto s = kbs::parse_keystore(good);
    CHECK(s.keys.at("m") == k.master.key);
    CHECK(s.signers.at("s") == k.signer.public_key);

    CHECK(code_of([] { kbs::parse_keystore("[]"); }) == Errc::MalformedKeystore);
    CHECK(code_of([] { kbs::parse_keystore("{"); }) == Errc::MalformedKeystore);
    CHECK(code_of([] { kbs::parse_keystore(R"({"keys":[{"kid":"m","key_b64":"!!"}]})"); }) ==
          Errc::MalformedKeystore);
    CHECK(code_of([&] { kbs::parse_keystore(json{{"keys", {{{"key_b64", key_b64}}}}}.dump()); }) ==
          Errc::MalformedKeystore);
    CHECK(code_of([&] {
              kbs::parse_keystore(
                  json{{"keys", {{{"kid", "m"}, {"key_b64", key_b64}}, {{"kid", "m"}, {"key_b64", key_b64}}}}}.dump());
          }) == Errc::MalformedKeystore);
    CHECK(code_of([] { kbs::parse_keystore(R"({"keys":[{"kid":"m","key_b64":"AAAA"}]})"); }) == Errc::BadKeyLength);
    CHECK(code_of([] { kbs::parse_keystore(R"({"signers":[{"kid":"s","pub_b64":"AAAA"}]})"); }) ==
          Errc::BadKeyLength);
}

TEST_CASE("broker status codes") {
    const auto k = testing::make_keys();
    std::vector<std::string> logs, events;
    kbs::KeyBroker broker(store_for(k), policy::system_clock(), [&](const std::string& l) { logs.push_back(l); },
                          [&](std::string_view e) { events.emplace_back(e); });
    const auto header = signed_header(k, R"({"eq":["$m.org","acme"]})");

    SUBCASE("release") {
        const auto r = broker.handle_key_request(request(header, k.master.kid, {{"org", "acme"}}));
        REQUIRE(r.status == 200);
        CHECK(base64_decode(json::parse(r.body).at("key_b64").get<std::string>()) ==
              Bytes(k.master.key.view().begin(), k.master.key.view().end()));
        CHECK(events == std::vector<std::string>{"verify_signature", "evaluate_remote_policy", "release_key"});
        for (const auto& l : logs) CHECK(l.find(base64_encode(k.master.key.view())) == std::string::npos);
    }
    SUBCASE("policy deny carries the reason") {
        const auto r = broker.handle_key_request(request(header, k.master.kid, {{"org", "evil"}}));
        CHECK(r.status == 403);
        CHECK(error_code(r) == "PolicyDenied");
        CHECK(json::parse(r.body)["error"]["reason"].get<std::string>().find("eq") != std::string::npos);
        CHECK(events == std::vector<std::string>{"verify_signature", "evaluate_remote_policy"});
    }
    SUBCASE("missing measurement fails closed") {
        CHECK(broker.handle_key_request(request(header, k.master.kid)).status == 403);
    }
    SUBCASE("malformed request") {
        CHECK(broker.handle_key_request("{").status == 400);
        CHECK(broker.handle_key_request(R"({"kid":"x"})").status == 400);
    }
    SUBCASE("kid mismatch") {
        CHECK(broker.handle_key_request(request(header, "other", {{"org", "acme"}})).status == 400);
    }
    SUBCASE("tampered header") {
        auto bad = header;
        bad[bad.size() / 2] ^= 1;
        const auto r = broker.handle_key_request(request(bad, k.master.kid, {{"org", "acme"}}));
        CHECK(r.status == 401);
        CHECK(std::find(events.begin(), events.end(), "release_key") == events.end());
    }
    SUBCASE("unknown signer") {
        const auto other = testing::make_keys(12);
        const auto r = broker.handle_key_request(request(signed_header(other, ""), other.master.kid));
        CHECK(r.status == 401);
    }
    SUBCASE("unknown key") {
        auto store = store_for(k);
        store.keys.clear();
        kbs::KeyBroker empty(std::move(store));
        const auto r = empty.handle_key_request(request(header, k.master.kid, {{"org", "acme"}}));
        CHECK(r.status == 404);
        CHECK(error_code(r) == "UnknownKeyId");
    }
}

TEST_CASE("loopback server end to end") {
    auto k = testing::make_keys();
    kbs::ServiceConfig sc;
    sc.insecure_http = true;
    kbs::Server server(sc);
    server.start();

    CHECK(code_of([&] { keys::http_get(server.base_url() + "/v1/health"); }) == Errc::NetworkError);
    auto broker = std::make_shared<kbs::KeyBroker>(store_for(k));
    server.set_broker(broker);
    const auto health = json::parse(std::string(as_chars(keys::http_get(server.base_url() + "/v1/health"))));
    CHECK(health.at("protocol") == "1");
    CHECK(code_of([&] { keys::http_get(server.base_url() + "/nothing"); }) == Errc::NotFound);

    testing::TempDir dir;
    k.meta.enc.uri = "kbs://127.0.0.1:" + std::to_string(server.port()) + "/";
    const Bytes d(16, 4);
    const TensorInput t[] = {{"w", format::Dtype::U8, {16}, d}};
    auto c = testing::make_config(k);
    c.policy.remote = policy::PolicyText{"ct-json-v1", R"({"eq":["$m.org","acme"]})"};
    serialize_file(t, dir / "m.ct", &c);

    auto options = [&](policy::Measurements m) {
        auto o = testing::open_options(k, std::move(m));
        o.resolver.master_keys.clear();
        o.resolver.allow_insecure_http = true;
        return o;
    };

    auto h = LoadHandle::open(dir / "m.ct", options({{"org", "acme"}}));
    CHECK(Bytes(h.get_tensor("w").data.begin(), h.get_tensor("w").data.end()) == d);

    try {
        LoadHandle::open(dir / "m.ct", options({{"org", "evil"}}));
        FAIL("expected a deny");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::PolicyDenied);
        CHECK(std::string(e.what()).find("eq") != std::string::npos);
    }

    // Without the opt-in the client refuses plain HTTP to the broker.
    auto strict = options({{"org", "acme"}});
    strict.resolver.allow_insecure_http = false;
    CHECK_THROWS_AS(LoadHandle::open(dir / "m.ct", strict), Error);

    server.stop();
}

TEST_CASE("broker replies are a function of request, store and clock") {
    const auto k = testing::make_keys();
    const auto clock = policy::fixed_clock(std::chrono::system_clock::time_point{std::chrono::seconds(1'700'000'000)});
    kbs::KeyBroker a(store_for(k), clock), b(store_for(k), clock);
    const auto header = signed_header(k, R"({"eq":["$m.org","acme"]})");
    for (const auto& m : {policy::Measurements{{"org", "acme"}}, policy::Measurements{{"org", "x"}}, policy::Measurements{}}) {
        const auto req = request(header, k.master.kid, m);
        const auto r1 = a.handle_key_request(req);
        const auto r2 = b.handle_key_request(req);
        const auto r3 = a.handle_key_request(req);
        CHECK(r1.status == r2.status);
        CHECK(r1.body == r2.body);
        CHECK(r1.body == r3.body);
    }
}
