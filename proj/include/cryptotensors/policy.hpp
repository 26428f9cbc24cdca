#pragma once

// Deployment policies. Two languages may appear in a file:
//   "ct-json-v1"  evaluated here (grammar below)
//   "rego"        carried byte-exact; evaluable only through a registered external evaluator
//
// ct-json-v1 grammar, one operator per JSON object:
//   {"all": [node, ...]}        {"any": [node, ...]}        {"not": node}
//   {"eq": [a, b]}  {"ne": [a, b]}  {"in": [a, [lit, ...]]}
//   {"time_before": [t]}  {"time_after": [t]}   (compared against the injected clock)
// Operands are literals (string, number, bool) or measurement references "$m.<key>".

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ct::policy {

using Measurements = std::map<std::string, std::string>;
using TimePoint = std::chrono::system_clock::time_point;
using Clock = std::function<TimePoint()>;

Clock system_clock();
Clock fixed_clock(TimePoint t);

/// "YYYY-MM-DDTHH:MM:SS[.fff](Z|±hh:mm)". Throws Error{InvalidArgument}.
TimePoint parse_rfc3339(std::string_view text);
/// UTC, whole seconds, "Z" suffix.
std::string format_rfc3339(TimePoint t);

inline constexpr std::string_view kLangCtJson = "ct-json-v1";
inline constexpr std::string_view kLangRego = "rego";

struct PolicyText {
    std::string lang;
    std::string text;
    friend bool operator==(const PolicyText&, const PolicyText&) = default;
};

/// The "__policy__" document. Absent halves allow everything.
struct PolicyDoc {
    std::optional<PolicyText> local;
    std::optional<PolicyText> remote;

    bool empty() const noexcept { return !local && !remote; }
    std::string to_json_string() const;
    /// Throws Error{MalformedPolicy}.
    static PolicyDoc parse(std::string_view json_text);
    friend bool operator==(const PolicyDoc&, const PolicyDoc&) = default;
};

struct Decision {
    bool allow = true;
    std::string reason;  // empty iff allow

    static Decision allowed() { return {}; }
    static Decision denied(std::string why) { return {false, std::move(why)}; }
};

struct Operand {
    enum class Kind { Literal, Measurement };
    Kind kind = Kind::Literal;
    std::string value;  // literal text, or the measurement key without "$m."
    std::optional<TimePoint> time;  // pre-parsed for time_* literals
};

enum class Op { All, Any, Not, Eq, Ne, In, TimeBefore, TimeAfter };

std::string_view op_name(Op op) noexcept;

struct Node {
    Op op = Op::All;
    std::vector<Node> children;      // all / any / not
    std::vector<Operand> operands;   // eq / ne / in / time_*
    std::vector<std::string> set;    // in
};

inline constexpr std::size_t kMaxDepth = 64;

/// Throws Error{MalformedPolicy | UnknownOperator | UnsupportedLanguage}.
Node parse_policy(const PolicyText& text);
Node parse_policy_json(std::string_view json_text);

/// Total and deterministic. A comparison over a missing measurement is unknown, and
/// unknown propagates through not/all/any (Kleene logic); only a definite true allows.
/// Deny reasons start with the path of the first failing node, e.g. "all[1].eq: ...".
Decision evaluate(const Node& ast, const Measurements& m, TimePoint now);

using ExternalEvaluator = std::function<Decision(std::string_view text, const Measurements&, TimePoint)>;

/// Dispatches PolicyText by language. ct-json-v1 is built in; others must be registered.
class PolicyEngine {
public:
    void register_evaluator(std::string lang, ExternalEvaluator evaluator);
    bool supports(std::string_view lang) const;
    /// Absent policy allows. Parse errors propagate as exceptions.
    Decision evaluate(const std::optional<PolicyText>& text, const Measurements& m, TimePoint now) const;

private:
    std::map<std::string, ExternalEvaluator, std::less<>> external_;
};

using MeasurementProvider = std::function<Measurements()>;

MeasurementProvider fixed_provider(Measurements m);

/// device_id, os, timestamp (RFC 3339 UTC from `clock`).
MeasurementProvider default_provider(Clock clock, std::function<std::string()> device_id = {});

/// /etc/machine-id, falling back to the host name.
std::string host_device_id();

/// Runs a provider and checks its output. Throws Error{ProviderFailure}.
Measurements collect_measurements(const MeasurementProvider& provider);

}  // namespace ct::policy
