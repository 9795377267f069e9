// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "tsods/error.hpp"
#include "tsods/hyperparams.hpp"
#include "tsods/primitives.hpp"

namespace tsods {

inline constexpr std::string_view kSchemaVersion = "tsods-1.0";

/// A pipeline edge source: the pipeline input or an earlier step's output.
struct DataReference {
    enum class Kind { PipelineInput, StepOutput };
    Kind kind = Kind::PipelineInput;
    std::size_t step_index = 0;

    static DataReference input() { return {Kind::PipelineInput, 0}; }
    static DataReference step(std::size_t k) { return {Kind::StepOutput, k}; }

    std::string str() const {
        return kind == Kind::PipelineInput ? "inputs.0" : "steps." + std::to_string(step_index) + ".produce";
    }

    static std::optional<DataReference> parse(const std::string& s) {
        if (s == "inputs.0") return input();
        static const std::regex pattern(R"(steps\.(0|[1-9][0-9]{0,8})\.produce)");
        std::smatch m;
        if (!std::regex_match(s, m, pattern)) return std::nullopt;
        return step(static_cast<std::size_t>(std::stoull(m[1].str())));
    }

    bool operator==(const DataReference&) const = default;
};

struct PipelineStep {
    std::string primitive_id;
    HyperparamMap hyperparams;
    std::map<std::string, DataReference> arguments;

    bool operator==(const PipelineStep&) const = default;
};

/// A forward-only DAG of primitive steps; the on-disk pipeline language.
struct PipelineDescription {
    std::string id;
    std::string schema_version{kSchemaVersion};
    std::vector<std::string> inputs{"dataset"};
    std::vector<PipelineStep> steps;
    std::vector<DataReference> outputs;

    bool operator==(const PipelineDescription&) const = default;
};

namespace pipeline_detail {

/// 128-bit FNV-1a rendered as a UUID (version nibble 8, RFC-4122 variant).
inline std::string content_uuid(const std::string& text) {
    std::uint64_t a = 0xcbf29ce484222325ULL, b = 0x84222325cbf29ce4ULL;
    for (unsigned char ch : text) {
        a = (a ^ ch) * 0x100000001b3ULL;
        b = (b ^ (ch + 0x5bU)) * 0x100000001b3ULL;
    }
    b ^= a >> 17;
    a = (a & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000008000ULL;
    b = (b & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(a >> 32),
                  static_cast<unsigned>((a >> 16) & 0xFFFF), static_cast<unsigned>(a & 0xFFFF),
                  static_cast<unsigned>(b >> 48), static_cast<unsigned long long>(b & 0xFFFFFFFFFFFFULL));
    return buf;
}

inline bool is_uuid(const std::string& s) {
    static const std::regex pattern(R"([0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12})");
    return std::regex_match(s, pattern);
}

inline json body_json(const PipelineDescription& p) {
    json steps = json::array();
    for (const auto& s : p.steps) {
        json hps = json::object();
        for (const auto& [name, value] : s.hyperparams) hps[name] = hp::to_json(value);
        json args = json::object();
        for (const auto& [name, ref] : s.arguments) args[name] = ref.str();
        steps.push_back({{"primitive_id", s.primitive_id}, {"hyperparams", hps}, {"arguments", args}});
    }
    json outputs = json::array();
    for (const auto& o : p.outputs) outputs.push_back(o.str());
    return json{{"schema_version", p.schema_version}, {"inputs", p.inputs}, {"steps", steps}, {"outputs", outputs}};
}

} // namespace pipeline_detail

/// Deterministic id derived from the pipeline's content (id field excluded).
inline std::string content_id(const PipelineDescription& p) {
    return pipeline_detail::content_uuid(pipeline_detail::body_json(p).dump());
}

inline json to_json(const PipelineDescription& p) {
    json j = pipeline_detail::body_json(p);
    j["id"] = p.id.empty() ? content_id(p) : p.id;
    return j;
}

/// Canonical text: keys sorted, two-space indent, shortest round-trip floats,
/// trailing newline.
inline std::string serialize_pipeline(const PipelineDescription& p) { return to_json(p).dump(2) + "\n"; }

/// Validates and converts a parsed JSON document. Hyperparameter defaults
/// are materialized; a missing id is derived from the content.
inline PipelineDescription parse_pipeline(const json& j) {
    auto malformed = [](const std::string& msg, std::optional<std::size_t> step = {}) {
        return Error(ErrorCode::MalformedPipeline, msg, step);
    };
    if (!j.is_object()) throw malformed("pipeline must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "id" && key != "schema_version" && key != "inputs" && key != "steps" && key != "outputs")
            throw malformed("unknown top-level key '" + key + "'");

    PipelineDescription p;
    if (!j.contains("schema_version") || !j["schema_version"].is_string() ||
        j["schema_version"].get<std::string>() != kSchemaVersion)
        throw Error(ErrorCode::UnknownSchemaVersion,
                    "expected schema_version \"" + std::string(kSchemaVersion) + "\", got " +
                        (j.contains("schema_version") ? j["schema_version"].dump() : std::string("nothing")));

    if (j.contains("inputs")) {
        const auto& in = j["inputs"];
        if (!in.is_array() || in.size() != 1 || !in[0].is_string() || in[0].get<std::string>() != "dataset")
            throw malformed("inputs must be exactly [\"dataset\"]");
    }

    if (!j.contains("steps") || !j["steps"].is_array() || j["steps"].empty())
        throw malformed("pipeline needs a non-empty 'steps' array");

    const auto& reg = registry();
    const auto& steps = j["steps"];
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& sj = steps[k];
        if (!sj.is_object()) throw malformed("step " + std::to_string(k) + " must be an object", k);
        for (const auto& [key, _] : sj.items())
            if (key != "primitive_id" && key != "hyperparams" && key != "arguments")
                throw malformed("step " + std::to_string(k) + " has unknown key '" + key + "'", k);
        if (!sj.contains("primitive_id") || !sj["primitive_id"].is_string())
            throw malformed("step " + std::to_string(k) + " needs a string 'primitive_id'", k);

        PipelineStep step;
        step.primitive_id = sj["primitive_id"].get<std::string>();
        const auto* entry = reg.find(step.primitive_id);
        if (!entry)
            throw Error(ErrorCode::UnknownPrimitive,
                        "step " + std::to_string(k) + ": unknown primitive '" + step.primitive_id + "'", k);
        const auto& desc = entry->descriptor;

        step.hyperparams = desc.defaults();
        if (sj.contains("hyperparams")) {
            const auto& hj = sj["hyperparams"];
            if (!hj.is_object()) throw malformed("step " + std::to_string(k) + ": hyperparams must be an object", k);
            for (const auto& [name, value] : hj.items()) {
                auto spec = desc.hyperparams.find(name);
                if (spec == desc.hyperparams.end())
                    throw Error(ErrorCode::UnknownHyperparam,
                                "step " + std::to_string(k) + ": primitive '" + desc.id + "' has no hyperparameter '" +
                                    name + "'",
                                k);
                try {
                    auto v = hp::from_json(value, spec->second, name);
                    hp::validate(name, spec->second, v);
                    step.hyperparams[name] = std::move(v);
                } catch (const Error& e) {
                    throw Error(e.code(), "step " + std::to_string(k) + ": " + e.what(), k);
                }
            }
        }

        if (sj.contains("arguments")) {
            const auto& aj = sj["arguments"];
            if (!aj.is_object()) throw malformed("step " + std::to_string(k) + ": arguments must be an object", k);
            for (const auto& [name, value] : aj.items()) {
                if (!value.is_string())
                    throw malformed("step " + std::to_string(k) + ": argument '" + name + "' must be a reference string",
                                    k);
                auto ref = DataReference::parse(value.get<std::string>());
                if (!ref)
                    throw malformed("step " + std::to_string(k) + ": bad data reference '" + value.get<std::string>() +
                                        "'",
                                    k);
                if (ref->kind == DataReference::Kind::StepOutput && ref->step_index >= k)
                    throw Error(ErrorCode::ForwardReference,
                                "step " + std::to_string(k) + " references " + ref->str() +
                                    ", which is not an earlier step",
                                k);
                step.arguments.emplace(name, *ref);
            }
        }
        p.steps.push_back(std::move(step));
    }

    if (!j.contains("outputs") || !j["outputs"].is_array() || j["outputs"].size() != 1 || !j["outputs"][0].is_string())
        throw Error(ErrorCode::BadOutput, "outputs must be a list with exactly one data reference");
    auto out = DataReference::parse(j["outputs"][0].get<std::string>());
    if (!out || out->kind != DataReference::Kind::StepOutput || out->step_index >= p.steps.size())
        throw Error(ErrorCode::BadOutput, "output must reference an existing step's produce");
    const auto produces = reg.at(p.steps[out->step_index].primitive_id).descriptor.produces;
    if (produces == DataKind::Table)
        throw Error(ErrorCode::BadOutput, "output step " + std::to_string(out->step_index) +
                                              " produces a Table; expected Labels or Scores");
    p.outputs.push_back(*out);

    if (j.contains("id")) {
        if (!j["id"].is_string() || !pipeline_detail::is_uuid(j["id"].get<std::string>()))
            throw malformed("id must be a UUID string");
        p.id = j["id"].get<std::string>();
    } else {
        p.id = content_id(p);
    }
    return p;
}

inline PipelineDescription parse_pipeline(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedJson, e.what());
    }
    return parse_pipeline(j);
}

inline PipelineDescription parse_pipeline(const std::string& json_text) { return parse_pipeline(std::string_view(json_text)); }
inline PipelineDescription parse_pipeline(const char* json_text) { return parse_pipeline(std::string_view(json_text)); }

/// Linear pipeline: each step consumes the previous one (the first consumes
/// the input), output is the last step. Defaults fill unspecified
/// hyperparameters and the id is content-derived.
inline PipelineDescription chain_pipeline(const std::vector<std::pair<std::string, HyperparamMap>>& steps) {
    PipelineDescription p;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& desc = registry().at(steps[k].first).descriptor;
        PipelineStep s{desc.id, desc.defaults(), {}};
        for (const auto& [name, value] : steps[k].second) {
            auto spec = desc.hyperparams.find(name);
            if (spec == desc.hyperparams.end())
                throw Error(ErrorCode::UnknownHyperparam, "primitive '" + desc.id + "' has no hyperparameter '" + name + "'", k);
            hp::validate(name, spec->second, value);
            s.hyperparams[name] = value;
        }
        s.arguments.emplace("inputs", k == 0 ? DataReference::input() : DataReference::step(k - 1));
        p.steps.push_back(std::move(s));
    }
    if (!p.steps.empty()) p.outputs.push_back(DataReference::step(p.steps.size() - 1));
    p.id = content_id(p);
    return p;
}

} // namespace tsods
