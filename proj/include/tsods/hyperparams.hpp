// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsods/detection.hpp"
#include "tsods/error.hpp"

namespace tsods {

using json = nlohmann::json;

using FloatList = std::vector<double>;
using RuleList = std::vector<detection::Rule>;

/// A bound hyperparameter. Enum and free-string values share std::string;
/// the owning schema says which one it is.
using HyperparamValue = std::variant<std::int64_t, double, bool, std::string, FloatList, RuleList>;
using HyperparamMap = std::map<std::string, HyperparamValue>;

enum class HyperparamType { Int, Float, Bool, Enum, String, FloatList, Rules };

constexpr std::string_view to_string(HyperparamType t) noexcept {
    switch (t) {
    case HyperparamType::Int: return "int";
    case HyperparamType::Float: return "float";
    case HyperparamType::Bool: return "bool";
    case HyperparamType::Enum: return "enum";
    case HyperparamType::String: return "string";
    case HyperparamType::FloatList: return "float_list";
    case HyperparamType::Rules: return "rules";
    }
    return "unknown";
}

struct HyperparamSpec {
    HyperparamType type = HyperparamType::Int;
    HyperparamValue default_value;
    std::optional<double> min;
    std::optional<double> max;
    bool min_exclusive = false;
    bool max_exclusive = false;
    std::vector<std::string> options; ///< Enum only
    std::string description;

    static HyperparamSpec integer(std::int64_t def, std::optional<double> lo, std::optional<double> hi,
                                  std::string doc) {
        return {HyperparamType::Int, def, lo, hi, false, false, {}, std::move(doc)};
    }
    static HyperparamSpec real(double def, std::optional<double> lo, std::optional<double> hi, std::string doc,
                               bool lo_open = false, bool hi_open = false) {
        return {HyperparamType::Float, def, lo, hi, lo_open, hi_open, {}, std::move(doc)};
    }
    static HyperparamSpec boolean(bool def, std::string doc) {
        return {HyperparamType::Bool, def, {}, {}, false, false, {}, std::move(doc)};
    }
    static HyperparamSpec choice(std::string def, std::vector<std::string> options, std::string doc) {
        return {HyperparamType::Enum, std::move(def), {}, {}, false, false, std::move(options), std::move(doc)};
    }
    static HyperparamSpec text(std::string def, std::string doc) {
        return {HyperparamType::String, std::move(def), {}, {}, false, false, {}, std::move(doc)};
    }
    static HyperparamSpec rules(std::string doc) {
        return {HyperparamType::Rules, RuleList{}, {}, {}, false, false, {}, std::move(doc)};
    }
};

namespace hp {

inline bool in_range(double v, const HyperparamSpec& s) {
    if (s.min && (s.min_exclusive ? !(v > *s.min) : !(v >= *s.min))) return false;
    if (s.max && (s.max_exclusive ? !(v < *s.max) : !(v <= *s.max))) return false;
    return true;
}

inline std::string range_text(const HyperparamSpec& s) {
    auto num = [](double v) {
        json j = v;
        return j.dump();
    };
    std::string out = s.min ? (s.min_exclusive ? "(" : "[") + num(*s.min) : std::string("(-inf");
    out += ", ";
    out += s.max ? num(*s.max) + (s.max_exclusive ? ")" : "]") : std::string("inf)");
    return out;
}

inline bool holds_declared_type(const HyperparamValue& v, HyperparamType t) {
    switch (t) {
    case HyperparamType::Int: return std::holds_alternative<std::int64_t>(v);
    case HyperparamType::Float: return std::holds_alternative<double>(v);
    case HyperparamType::Bool: return std::holds_alternative<bool>(v);
    case HyperparamType::Enum:
    case HyperparamType::String: return std::holds_alternative<std::string>(v);
    case HyperparamType::FloatList: return std::holds_alternative<FloatList>(v);
    case HyperparamType::Rules: return std::holds_alternative<RuleList>(v);
    }
    return false;
}

/// Throws HyperparamTypeMismatch / HyperparamOutOfRange when `v` does not
/// conform to `spec`.
inline void validate(const std::string& name, const HyperparamSpec& spec, const HyperparamValue& v) {
    if (!holds_declared_type(v, spec.type))
        throw Error(ErrorCode::HyperparamTypeMismatch,
                    "hyperparameter '" + name + "' expects type " + std::string(to_string(spec.type)));
    auto out_of_range = [&](const std::string& detail) {
        return Error(ErrorCode::HyperparamOutOfRange, "hyperparameter '" + name + "' " + detail);
    };
    switch (spec.type) {
    case HyperparamType::Int: {
        const auto x = static_cast<double>(std::get<std::int64_t>(v));
        if (!in_range(x, spec)) throw out_of_range("= " + json(std::get<std::int64_t>(v)).dump() + " outside " + range_text(spec));
        break;
    }
    case HyperparamType::Float: {
        const double x = std::get<double>(v);
        if (!std::isfinite(x) || !in_range(x, spec)) throw out_of_range("= " + json(x).dump() + " outside " + range_text(spec));
        break;
    }
    case HyperparamType::Enum: {
        const auto& s = std::get<std::string>(v);
        if (std::find(spec.options.begin(), spec.options.end(), s) == spec.options.end())
            throw out_of_range("= '" + s + "' is not one of " + json(spec.options).dump());
        break;
    }
    case HyperparamType::FloatList:
        for (double x : std::get<FloatList>(v))
            if (!std::isfinite(x) || !in_range(x, spec)) throw out_of_range("has element outside " + range_text(spec));
        break;
    case HyperparamType::Rules:
        for (const auto& r : std::get<RuleList>(v))
            if (!(r.lo <= r.hi)) throw out_of_range("has a rule with lower bound above upper bound");
        break;
    case HyperparamType::Bool:
    case HyperparamType::String: break;
    }
}

// --- JSON ------------------------------------------------------------------

inline std::string_view predicate_name(detection::PredicateKind k) {
    switch (k) {
    case detection::PredicateKind::InRange: return "in_range";
    case detection::PredicateKind::OutsideRange: return "outside_range";
    case detection::PredicateKind::TimeIn: return "time_in";
    }
    return "";
}

inline std::string_view action_name(detection::RuleAction a) {
    return a == detection::RuleAction::ForceOutlier ? "force_outlier" : "force_normal";
}

inline json rule_to_json(const detection::Rule& r) {
    return json{{"feature", r.feature},
                {"predicate", {{"kind", predicate_name(r.kind)}, {"args", {r.lo, r.hi}}}},
                {"action", action_name(r.action)}};
}

inline detection::Rule rule_from_json(const json& j, const std::string& name) {
    auto bad = [&](const std::string& what) {
        return Error(ErrorCode::HyperparamTypeMismatch, "hyperparameter '" + name + "': " + what);
    };
    if (!j.is_object()) throw bad("rule must be an object");
    detection::Rule r;
    if (!j.contains("feature") || !j["feature"].is_string()) throw bad("rule needs a string 'feature'");
    r.feature = j["feature"].get<std::string>();
    if (!j.contains("predicate") || !j["predicate"].is_object()) throw bad("rule needs a 'predicate' object");
    const auto& p = j["predicate"];
    const std::string kind = p.value("kind", "");
    if (kind == "in_range") r.kind = detection::PredicateKind::InRange;
    else if (kind == "outside_range") r.kind = detection::PredicateKind::OutsideRange;
    else if (kind == "time_in") r.kind = detection::PredicateKind::TimeIn;
    else throw bad("unknown predicate kind '" + kind + "'");
    if (!p.contains("args") || !p["args"].is_array() || p["args"].size() != 2 || !p["args"][0].is_number() ||
        !p["args"][1].is_number())
        throw bad("predicate 'args' must be two numbers");
    r.lo = p["args"][0].get<double>();
    r.hi = p["args"][1].get<double>();
    const std::string action = j.value("action", "");
    if (action == "force_normal") r.action = detection::RuleAction::ForceNormal;
    else if (action == "force_outlier") r.action = detection::RuleAction::ForceOutlier;
    else throw bad("unknown action '" + action + "'");
    return r;
}

inline json to_json(const HyperparamValue& v) {
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, RuleList>) {
                json arr = json::array();
                for (const auto& r : x) arr.push_back(rule_to_json(r));
                return arr;
            } else {
                return json(x);
            }
        },
        v);
}

/// Converts a JSON value according to the declared type (no range checks).
inline HyperparamValue from_json(const json& j, const HyperparamSpec& spec, const std::string& name) {
    auto mismatch = [&] {
        return Error(ErrorCode::HyperparamTypeMismatch,
                     "hyperparameter '" + name + "' expects type " + std::string(to_string(spec.type)) + ", got " +
                         j.dump());
    };
    switch (spec.type) {
    case HyperparamType::Int:
        if (j.is_number_integer()) return j.get<std::int64_t>();
        if (j.is_number_float()) {
            const double d = j.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
        }
        throw mismatch();
    case HyperparamType::Float:
        if (j.is_number()) return j.get<double>();
        throw mismatch();
    case HyperparamType::Bool:
        if (j.is_boolean()) return j.get<bool>();
        throw mismatch();
    case HyperparamType::Enum:
    case HyperparamType::String:
        if (j.is_string()) return j.get<std::string>();
        throw mismatch();
    case HyperparamType::FloatList: {
        if (!j.is_array()) throw mismatch();
        FloatList out;
        for (const auto& e : j) {
            if (!e.is_number()) throw mismatch();
            out.push_back(e.get<double>());
        }
        return out;
    }
    case HyperparamType::Rules: {
        if (!j.is_array()) throw mismatch();
        RuleList out;
        for (const auto& e : j) out.push_back(rule_from_json(e, name));
        return out;
    }
    }
    throw mismatch();
}

inline json spec_to_json(const HyperparamSpec& s) {
    json j{{"type", to_string(s.type)}, {"default", to_json(s.default_value)}, {"description", s.description}};
    if (s.min) j["min"] = *s.min;
    if (s.max) j["max"] = *s.max;
    if (s.min_exclusive) j["min_exclusive"] = true;
    if (s.max_exclusive) j["max_exclusive"] = true;
    if (s.type == HyperparamType::Enum) j["options"] = s.options;
    return j;
}

// --- typed accessors ---------------------------------------------------------

inline const HyperparamValue& at(const HyperparamMap& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) throw Error(ErrorCode::UnknownHyperparam, "missing hyperparameter '" + name + "'");
    return it->second;
}
inline std::int64_t get_int(const HyperparamMap& m, const std::string& name) { return std::get<std::int64_t>(at(m, name)); }
inline double get_float(const HyperparamMap& m, const std::string& name) { return std::get<double>(at(m, name)); }
inline bool get_bool(const HyperparamMap& m, const std::string& name) { return std::get<bool>(at(m, name)); }
inline const std::string& get_string(const HyperparamMap& m, const std::string& name) {
    return std::get<std::string>(at(m, name));
}
inline const RuleList& get_rules(const HyperparamMap& m, const std::string& name) {
    return std::get<RuleList>(at(m, name));
}

} // namespace hp
} // namespace tsods
