#include "cryptotensors/policy.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <cctype>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cryptotensors/error.hpp"

namespace ct::policy {
namespace {

using json = nlohmann::json;

constexpr std::string_view kMeasurementPrefix = "$m.";

enum class Tri { False, True, Unknown };

struct Outcome {
    Tri value = Tri::True;
    std::string reason;  // set when value != True
};

int digits(std::string_view s, std::size_t pos, std::size_t n) {
    if (pos + n > s.size()) return -1;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return -1;
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

std::string literal_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw Error(Errc::MalformedPolicy, "operand must be a string, number or boolean");
}

Operand parse_operand(const json& v, bool time_literal) {
    Operand op;
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s.rfind(kMeasurementPrefix, 0) == 0) {
            op.kind = Operand::Kind::Measurement;
            op.value = s.substr(kMeasurementPrefix.size());
            if (op.value.empty()) throw Error(Errc::MalformedPolicy, "empty measurement reference");
            return op;
        }
    }
    op.value = literal_text(v);
    if (time_literal) {
        try {
            op.time = parse_rfc3339(op.value);
        } catch (const Error&) {
            throw Error(Errc::MalformedPolicy, "'" + op.value + "' is not an RFC 3339 timestamp");
        }
    }
    return op;
}

const json& operand_array(const json& v, std::size_t n, std::string_view op) {
    if (!v.is_array() || v.size() != n) {
        throw Error(Errc::MalformedPolicy, std::string(op) + " takes " + std::to_string(n) + " operand(s)");
    }
    return v;
}

Node parse_node(const json& v, std::size_t depth) {
    if (depth > kMaxDepth) throw Error(Errc::MalformedPolicy, "policy nesting exceeds 64 levels");
    if (!v.is_object() || v.size() != 1) throw Error(Errc::MalformedPolicy, "each node must be an object with one operator");
    const auto& [key, arg] = *v.items().begin();
    Node node;
    if (key == "all" || key == "any") {
        node.op = key == "all" ? Op::All : Op::Any;
        if (!arg.is_array()) throw Error(Errc::MalformedPolicy, key + " takes an array of nodes");
        for (const auto& child : arg) node.children.push_back(parse_node(child, depth + 1));
    } else if (key == "not") {
        node.op = Op::Not;
        const json& inner = arg.is_array() ? operand_array(arg, 1, "not")[0] : arg;
        node.children.push_back(parse_node(inner, depth + 1));
    } else if (key == "eq" || key == "ne") {
        node.op = key == "eq" ? Op::Eq : Op::Ne;
        const auto& ops = operand_array(arg, 2, key);
        node.operands = {parse_operand(ops[0], false), parse_operand(ops[1], false)};
    } else if (key == "in") {
        node.op = Op::In;
        const auto& ops = operand_array(arg, 2, key);
        node.operands = {parse_operand(ops[0], false)};
        if (!ops[1].is_array()) throw Error(Errc::MalformedPolicy, "in takes [operand, [literal, ...]]");
        for (const auto& lit : ops[1]) node.set.push_back(literal_text(lit));
    } else if (key == "time_before" || key == "time_after") {
        node.op = key == "time_before" ? Op::TimeBefore : Op::TimeAfter;
        const json& t = arg.is_array() ? operand_array(arg, 1, key)[0] : arg;
        node.operands = {parse_operand(t, true)};
    } else {
        throw Error(Errc::UnknownOperator, "unknown operator '" + key + "'");
    }
    return node;
}

std::string describe(const Operand& op) {
    return op.kind == Operand::Kind::Measurement ? "$m." + op.value : "\"" + op.value + "\"";
}

// Returns nullopt when the operand names a measurement that is absent.
std::optional<std::string> resolve(const Operand& op, const Measurements& m) {
    if (op.kind == Operand::Kind::Literal) return op.value;
    const auto it = m.find(op.value);
    if (it == m.end()) return std::nullopt;
    return it->second;
}

Outcome missing(const std::string& path, const Operand& op) {
    return {Tri::Unknown, path + ": measurement '" + op.value + "' is missing"};
}

Outcome eval(const Node& node, const Measurements& m, TimePoint now, const std::string& path) {
    switch (node.op) {
        case Op::All: {
            std::optional<Outcome> first_failure;
            bool any_false = false;
            for (std::size_t i = 0; i < node.children.size(); ++i) {
                auto r = eval(node.children[i], m, now, path + "[" + std::to_string(i) + "]." +
                                                           std::string(op_name(node.children[i].op)));
                if (r.value == Tri::True) continue;
                any_false = any_false || r.value == Tri::False;
                if (!first_failure) first_failure = std::move(r);
            }
            if (!first_failure) return {};
            first_failure->value = any_false ? Tri::False : Tri::Unknown;
            return *first_failure;
        }
        case Op::Any: {
            bool unknown = false;
            for (std::size_t i = 0; i < node.children.size(); ++i) {
                const auto r = eval(node.children[i], m, now, path + "[" + std::to_string(i) + "]." +
                                                                 std::string(op_name(node.children[i].op)));
                if (r.value == Tri::True) return {};
                if (r.value == Tri::Unknown) unknown = true;
            }
            return {unknown ? Tri::Unknown : Tri::False, path + ": no alternative is satisfied"};
        }
        case Op::Not: {
            const auto& child = node.children.front();
            const auto r = eval(child, m, now, path + "." + std::string(op_name(child.op)));
            if (r.value == Tri::Unknown) return r;
            if (r.value == Tri::True) return {Tri::False, path + ": negated condition holds"};
            return {};
        }
        case Op::Eq:
        case Op::Ne: {
            const auto a = resolve(node.operands[0], m);
            if (!a) return missing(path, node.operands[0]);
            const auto b = resolve(node.operands[1], m);
            if (!b) return missing(path, node.operands[1]);
            const bool equal = *a == *b;
            if (equal == (node.op == Op::Eq)) return {};
            return {Tri::False, path + ": " + describe(node.operands[0]) + " is \"" + *a + "\"" +
                                    (node.op == Op::Eq ? ", expected " : ", must differ from ") +
                                    describe(node.operands[1])};
        }
        case Op::In: {
            const auto a = resolve(node.operands[0], m);
            if (!a) return missing(path, node.operands[0]);
            for (const auto& s : node.set) {
                if (s == *a) return {};
            }
            return {Tri::False, path + ": " + describe(node.operands[0]) + " is \"" + *a + "\", not in the allowed set"};
        }
        case Op::TimeBefore:
        case Op::TimeAfter: {
            const auto& op = node.operands[0];
            TimePoint limit;
            if (op.time) {
                limit = *op.time;
            } else {
                const auto text = resolve(op, m);
                if (!text) return missing(path, op);
                try {
                    limit = parse_rfc3339(*text);
                } catch (const Error&) {
                    return {Tri::Unknown, path + ": measurement '" + op.value + "' is not a timestamp"};
                }
            }
            const bool ok = node.op == Op::TimeBefore ? now < limit : now > limit;
            if (ok) return {};
            return {Tri::False, path + ": current time " + format_rfc3339(now) +
                                    (node.op == Op::TimeBefore ? " is not before " : " is not after ") +
                                    format_rfc3339(limit)};
        }
    }
    return {Tri::False, path + ": unreachable"};
}

std::optional<PolicyText> parse_half(const json& doc, const char* key) {
    const auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return std::nullopt;
    if (!it->is_object()) throw Error(Errc::MalformedPolicy, std::string(key) + " policy must be an object");
    const auto lang = it->find("lang");
    const auto text = it->find("text");
    if (lang == it->end() || !lang->is_string() || text == it->end() || !text->is_string()) {
        throw Error(Errc::MalformedPolicy, std::string(key) + " policy needs string fields lang and text");
    }
    return PolicyText{lang->get<std::string>(), text->get<std::string>()};
}

}  // namespace

std::string_view op_name(Op op) noexcept {
    switch (op) {
        case Op::All: return "all";
        case Op::Any: return "any";
        case Op::Not: return "not";
        case Op::Eq: return "eq";
        case Op::Ne: return "ne";
        case Op::In: return "in";
        case Op::TimeBefore: return "time_before";
        case Op::TimeAfter: return "time_after";
    }
    return "?";
}

Clock system_clock() {
    return [] { return std::chrono::system_clock::now(); };
}

Clock fixed_clock(TimePoint t) {
    return [t] { return t; };
}

TimePoint parse_rfc3339(std::string_view s) {
    const auto bad = [&] { return Error(Errc::InvalidArgument, "invalid RFC 3339 timestamp '" + std::string(s) + "'"); };
    const int year = digits(s, 0, 4), month = digits(s, 5, 2), day = digits(s, 8, 2);
    const int hour = digits(s, 11, 2), minute = digits(s, 14, 2), second = digits(s, 17, 2);
    if (year < 0 || month < 1 || month > 12 || day < 1 || day > 31 || hour < 0 || hour > 23 || minute < 0 ||
        minute > 59 || second < 0 || second > 60 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't') ||
        s[13] != ':' || s[16] != ':') {
        throw bad();
    }
    std::size_t pos = 19;
    std::chrono::nanoseconds frac{0};
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::int64_t scale = 100'000'000, ns = 0;
        const std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            ns += (s[pos] - '0') * scale;
            scale /= 10;
            ++pos;
        }
        if (pos == start) throw bad();
        frac = std::chrono::nanoseconds(ns);
    }
    int offset_minutes = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        const int oh = digits(s, pos + 1, 2), om = digits(s, pos + 4, 2);
        if (oh < 0 || om < 0 || pos + 3 >= s.size() || s[pos + 3] != ':') throw bad();
        offset_minutes = (oh * 60 + om) * (s[pos] == '+' ? 1 : -1);
        pos += 6;
    } else {
        throw bad();
    }
    if (pos != s.size()) throw bad();

    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = minute;
    tm.tm_sec = second;
    const std::time_t t = timegm(&tm);
    auto tp = std::chrono::system_clock::from_time_t(t) - std::chrono::minutes(offset_minutes);
    return tp + std::chrono::duration_cast<std::chrono::system_clock::duration>(frac);
}

std::string format_rfc3339(TimePoint t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(
        std::chrono::floor<std::chrono::seconds>(t));
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return {buf, n};
}

std::string PolicyDoc::to_json_string() const {
    json doc = json::object();
    if (local) doc["local"] = {{"lang", local->lang}, {"text", local->text}};
    if (remote) doc["remote"] = {{"lang", remote->lang}, {"text", remote->text}};
    return doc.dump();
}

PolicyDoc PolicyDoc::parse(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedPolicy, e.what());
    }
    if (!doc.is_object()) throw Error(Errc::MalformedPolicy, "__policy__ must be a JSON object");
    for (const auto& [k, v] : doc.items()) {
        if (k != "local" && k != "remote") throw Error(Errc::MalformedPolicy, "unexpected policy field '" + k + "'");
    }
    PolicyDoc out;
    out.local = parse_half(doc, "local");
    out.remote = parse_half(doc, "remote");
    return out;
}

Node parse_policy_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedPolicy, e.what());
    }
    return parse_node(doc, 1);
}

Node parse_policy(const PolicyText& text) {
    if (text.lang != kLangCtJson) {
        throw Error(Errc::UnsupportedLanguage, "no evaluator for policy language '" + text.lang + "'");
    }
    return parse_policy_json(text.text);
}

Decision evaluate(const Node& ast, const Measurements& m, TimePoint now) {
    auto r = eval(ast, m, now, std::string(op_name(ast.op)));
    if (r.value == Tri::True) return Decision::allowed();
    return Decision::denied(std::move(r.reason));
}

void PolicyEngine::register_evaluator(std::string lang, ExternalEvaluator evaluator) {
    external_[std::move(lang)] = std::move(evaluator);
}

bool PolicyEngine::supports(std::string_view lang) const {
    return lang == kLangCtJson || external_.find(lang) != external_.end();
}

Decision PolicyEngine::evaluate(const std::optional<PolicyText>& text, const Measurements& m, TimePoint now) const {
    if (!text) return Decision::allowed();
    if (text->lang == kLangCtJson) return policy::evaluate(parse_policy(*text), m, now);
    const auto it = external_.find(text->lang);
    if (it == external_.end()) {
        throw Error(Errc::UnsupportedLanguage, "no evaluator for policy language '" + text->lang + "'");
    }
    auto d = it->second(text->text, m, now);
    if (!d.allow && d.reason.empty()) d.reason = text->lang + ": denied";
    if (d.allow) d.reason.clear();
    return d;
}

MeasurementProvider fixed_provider(Measurements m) {
    return [m = std::move(m)] { return m; };
}

std::string host_device_id() {
    std::ifstream in("/etc/machine-id");
    std::string id;
    if (in && std::getline(in, id) && !id.empty()) return id;
    char host[256] = {};
    if (::gethostname(host, sizeof host - 1) == 0 && host[0] != '\0') return host;
    return "unknown";
}

MeasurementProvider default_provider(Clock clock, std::function<std::string()> device_id) {
    if (!device_id) device_id = host_device_id;
    return [clock = std::move(clock), device_id = std::move(device_id)] {
        utsname u{};
        std::string os = "unknown";
        if (::uname(&u) == 0) {
            os = u.sysname;
            for (auto& c : os) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        return Measurements{{"device_id", device_id()}, {"os", os}, {"timestamp", format_rfc3339(clock())}};
    };
}

Measurements collect_measurements(const MeasurementProvider& provider) {
    if (!provider) throw Error(Errc::ProviderFailure, "no measurement provider configured");
    Measurements m;
    try {
        m = provider();
    } catch (const std::exception& e) {
        throw Error(Errc::ProviderFailure, e.what());
    }
    for (const auto& [k, v] : m) {
        if (k.empty()) throw Error(Errc::ProviderFailure, "measurement with empty key");
    }
    return m;
}

}  // namespace ct::policy
