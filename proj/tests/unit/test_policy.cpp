#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "cryptotensors/error.hpp"
#include "cryptotensors/policy.hpp"

using namespace ct;
using namespace ct::policy;
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

const TimePoint kNow = parse_rfc3339("2026-03-01T12:00:00Z");

Decision run(std::string_view policy, const Measurements& m, TimePoint now = kNow) {
    return evaluate(parse_policy_json(policy), m, now);
}

// Two-valued evaluation for the case where every referenced measurement is present.
bool classical(const Node& n, const Measurements& m, TimePoint now) {
    auto val = [&](const Operand& o) { return o.kind == Operand::Kind::Literal ? o.value : m.at(o.value); };
    switch (n.op) {
        case Op::All:
            return std::all_of(n.children.begin(), n.children.end(), [&](const Node& c) { return classical(c, m, now); });
        case Op::Any:
            return std::any_of(n.children.begin(), n.children.end(), [&](const Node& c) { return classical(c, m, now); });
        case Op::Not: return !classical(n.children[0], m, now);
        case Op::Eq: return val(n.operands[0]) == val(n.operands[1]);
        case Op::Ne: return val(n.operands[0]) != val(n.operands[1]);
        case Op::In: return std::find(n.set.begin(), n.set.end(), val(n.operands[0])) != n.set.end();
        case Op::TimeBefore: return now < *n.operands[0].time;
        case Op::TimeAfter: return now > *n.operands[0].time;
    }
    return false;
}

const char* kKeys[] = {"a", "b", "c"};
const char* kValues[] = {"x", "y"};

json random_policy(std::mt19937_64& rng, int depth) {
    const int pick = depth >= 4 ? 3 + static_cast<int>(rng() % 4) : static_cast<int>(rng() % 7);
    auto operand = [&] {
        return rng() % 2 ? json(std::string("$m.") + kKeys[rng() % 3]) : json(kValues[rng() % 2]);
    };
    switch (pick) {
        case 0:
        case 1: {
            json arr = json::array();
            for (std::size_t i = 0, n = rng() % 4; i < n; ++i) arr.push_back(random_policy(rng, depth + 1));
            return {{pick == 0 ? "all" : "any", arr}};
        }
        case 2: return {{"not", random_policy(rng, depth + 1)}};
        case 3: return {{"eq", {operand(), operand()}}};
        case 4: return {{"ne", {operand(), operand()}}};
        case 5: return {{"in", {operand(), {"x"}}}};
        default: return {{rng() % 2 ? "time_before" : "time_after", rng() % 2 ? "2026-01-01T00:00:00Z" : "2027-01-01T00:00:00Z"}};
    }
}

}  // namespace

TEST_CASE("eq on a measurement") {
    const auto p = R"({"eq":["$m.device_id","X"]})";
    CHECK(run(p, {{"device_id", "X"}}).allow);
    const auto d = run(p, {{"device_id", "Y"}});
    CHECK_FALSE(d.allow);
    CHECK(d.reason.rfind("eq: ", 0) == 0);
    CHECK(d.reason.find("\"Y\"") != std::string::npos);
}

TEST_CASE("deny reasons carry the node path") {
    const auto d = run(R"({"all":[{"eq":["$m.os","linux"]},{"eq":["$m.org","acme"]}]})", {{"os", "linux"}, {"org", "evil"}});
    CHECK_FALSE(d.allow);
    CHECK(d.reason.rfind("all[1].eq: ", 0) == 0);

    const auto n = run(R"({"not":{"eq":["$m.os","linux"]}})", {{"os", "linux"}});
    CHECK_FALSE(n.allow);
    CHECK(n.reason.rfind("not: ", 0) == 0);

    const auto a = run(R"({"any":[{"eq":["$m.os","a"]},{"eq":["$m.os","b"]}]})", {{"os", "c"}});
    CHECK_FALSE(a.allow);
    CHECK(a.reason == "any: no alternative is satisfied");
}

TEST_CASE("missing measurements fail closed") {
    const auto d = run(R"({"eq":["$m.device_id","X"]})", {});
    CHECK_FALSE(d.allow);
    CHECK(d.reason.find("measurement 'device_id' is missing") != std::string::npos);
    CHECK_FALSE(run(R"({"not":{"eq":["$m.device_id","X"]}})", {}).allow);
    CHECK_FALSE(run(R"({"ne":["$m.device_id","X"]})", {}).allow);
    CHECK(run(R"({"any":[{"eq":["$m.gone","X"]},{"eq":["a","a"]}]})", {}).allow);
    CHECK_FALSE(run(R"({"all":[{"eq":["$m.gone","X"]},{"eq":["a","a"]}]})", {}).allow);
}

TEST_CASE("in and time comparisons") {
    CHECK(run(R"({"in":["$m.os",["linux","darwin"]]})", {{"os", "darwin"}}).allow);
    CHECK_FALSE(run(R"({"in":["$m.os",["linux","darwin"]]})", {{"os", "windows"}}).allow);
    CHECK(run(R"({"time_before":"2026-03-01T12:00:01Z"})", {}).allow);
    CHECK_FALSE(run(R"({"time_before":"2026-03-01T12:00:00Z"})", {}).allow);
    CHECK(run(R"({"time_after":["2026-03-01T11:59:59+00:00"]})", {}).allow);
    CHECK(run(R"({"time_after":"2026-03-01T13:00:00+02:00"})", {}).allow);
    CHECK_FALSE(run(R"({"time_after":"$m.not_before"})", {{"not_before", "2030-01-01T00:00:00Z"}}).allow);
    CHECK(run(R"({"time_after":"$m.not_before"})", {{"not_before", "2020-01-01T00:00:00Z"}}).allow);
    CHECK_FALSE(run(R"({"time_after":"$m.not_before"})", {{"not_before", "yesterday"}}).allow);
    CHECK(run(R"({"eq":[1,"1"]})", {}).allow);
    CHECK(run(R"({"eq":[true,"true"]})", {}).allow);
    CHECK(run(R"({"all":[]})", {}).allow);
    CHECK_FALSE(run(R"({"any":[]})", {}).allow);
}

TEST_CASE("malformed policies") {
    CHECK(code_of([] { parse_policy_json(R"({"xor":[]})"); }) == Errc::UnknownOperator);
    CHECK(code_of([] { parse_policy_json(R"({"eq":["a"]})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { parse_policy_json(R"({"eq":["a","b"],"ne":["a","b"]})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { parse_policy_json(R"({"all":{}})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { parse_policy_json(R"({"time_before":"soon"})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { parse_policy_json(R"({"eq":["$m.","a"]})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { parse_policy_json(R"({"eq":[[],"a"]})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { parse_policy_json("not json"); }) == Errc::MalformedPolicy);

    std::string deep = R"({"eq":["a","a"]})";
    for (int i = 0; i < 63; ++i) deep = R"({"not":)" + deep + "}";
    CHECK_NOTHROW(parse_policy_json(deep));
    deep = R"({"not":)" + deep + "}";
    CHECK(code_of([&] { parse_policy_json(deep); }) == Errc::MalformedPolicy);
}

TEST_CASE("engine dispatch by language") {
    PolicyEngine engine;
    CHECK(engine.evaluate(std::nullopt, {}, kNow).allow);
    CHECK(engine.supports(kLangCtJson));
    CHECK_FALSE(engine.supports(kLangRego));
    const PolicyText rego{"rego", "package x\nallow = true"};
    CHECK(code_of([&] { engine.evaluate(rego, {}, kNow); }) == Errc::UnsupportedLanguage);
    CHECK(code_of([&] { parse_policy(rego); }) == Errc::UnsupportedLanguage);

    std::string seen;
    engine.register_evaluator("rego", [&](std::string_view text, const Measurements&, TimePoint) {
        seen = std::string(text);
        return Decision::denied("");
    });
    CHECK(engine.supports("rego"));
    const auto d = engine.evaluate(rego, {}, kNow);
    CHECK_FALSE(d.allow);
    CHECK(d.reason == "rego: denied");
    CHECK(seen == rego.text);
}

TEST_CASE("PolicyDoc round trip") {
    PolicyDoc doc;
    CHECK(doc.to_json_string() == "{}");
    CHECK(PolicyDoc::parse("{}").empty());
    doc.local = PolicyText{"ct-json-v1", R"({"eq":["$m.os","linux"]})"};
    CHECK(PolicyDoc::parse(doc.to_json_string()) == doc);
    doc.remote = PolicyText{"rego", "allow"};
    CHECK(PolicyDoc::parse(doc.to_json_string()) == doc);
    CHECK(code_of([] { PolicyDoc::parse(R"({"locale":{}})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { PolicyDoc::parse(R"({"local":{"lang":"x"}})"); }) == Errc::MalformedPolicy);
    CHECK(code_of([] { PolicyDoc::parse("[]"); }) == Errc::MalformedPolicy);
}

TEST_CASE("RFC 3339") {
    const auto t = parse_rfc3339("2026-03-01T12:00:00Z");
    CHECK(format_rfc3339(t) == "2026-03-01T12:00:00Z");
    CHECK(parse_rfc3339("2026-03-01T14:30:00+02:30") == t);
    CHECK(parse_rfc3339("2026-03-01T07:00:00-05:00") == t);
    CHECK(parse_rfc3339("2026-03-01T12:00:00.5Z") - t == std::chrono::milliseconds(500));
    CHECK(std::chrono::system_clock::to_time_t(parse_rfc3339("1970-01-01T00:00:00Z")) == 0);
    for (const char* bad : {"", "2026-03-01", "2026-03-01 12:00:00Z", "2026-13-01T00:00:00Z", "2026-03-01T12:00:00",
                            "2026-03-01T12:00:00.Z", "2026-03-01T12:00:00+0200", "2026-03-01T12:00:00Zjunk"}) {
        CAPTURE(bad);
        CHECK(code_of([&] { parse_rfc3339(bad); }) == Errc::InvalidArgument);
    }
}

TEST_CASE("measurement providers") {
    const auto m = collect_measurements(default_provider(fixed_clock(kNow), [] { return std::string("dev-1"); }));
    CHECK(m.at("device_id") == "dev-1");
    CHECK(m.at("timestamp") == "2026-03-01T12:00:00Z");
    CHECK(m.at("os") == "linux");
    CHECK_FALSE(host_device_id().empty());
    CHECK(code_of([] { collect_measurements([]() -> Measurements { throw std::runtime_error("boom"); }); }) ==
          Errc::ProviderFailure);
    CHECK(code_of([] { collect_measurements(fixed_provider({{"", "x"}})); }) == Errc::ProviderFailure);
    CHECK(code_of([] { collect_measurements({}); }) == Errc::ProviderFailure);
}

TEST_CASE("property: with every measurement present, evaluation is classical logic") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 2000; ++i) {
        const auto doc = random_policy(rng, 0);
        const auto ast = parse_policy_json(doc.dump());
        Measurements m;
        for (const char* k : kKeys) m[k] = kValues[rng() % 2];
        CAPTURE(doc.dump());
        CHECK(evaluate(ast, m, kNow).allow == classical(ast, m, kNow));
    }
}

TEST_CASE("property: removing measurements never turns a deny into an allow") {
    std::mt19937_64 rng(29);
    for (int i = 0; i < 2000; ++i) {
        const auto doc = random_policy(rng, 0);
        const auto ast = parse_policy_json(doc.dump());
        Measurements full;
        for (const char* k : kKeys) full[k] = kValues[rng() % 2];
        const bool full_allow = evaluate(ast, full, kNow).allow;
        for (unsigned mask = 0; mask < 8; ++mask) {
            Measurements partial;
            for (unsigned b = 0; b < 3; ++b) {
                if (mask & (1u << b)) partial[kKeys[b]] = full[kKeys[b]];
            }
            const auto d = evaluate(ast, partial, kNow);
            CAPTURE(doc.dump());
            CAPTURE(mask);
            if (d.allow) CHECK(full_allow);
            CHECK(d.allow == evaluate(ast, partial, kNow).allow);
            if (!d.allow) CHECK_FALSE(d.reason.empty());
        }
    }
}
