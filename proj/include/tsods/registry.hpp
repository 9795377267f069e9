// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tsods/dataset.hpp"
#include "tsods/error.hpp"
#include "tsods/hyperparams.hpp"

namespace tsods {

enum class Family { DataProcessing, TimeSeriesProcessing, FeatureAnalysis, DetectionAlgorithm, Reinforcement };

constexpr std::string_view to_string(Family f) noexcept {
    switch (f) {
    case Family::DataProcessing: return "DataProcessing";
    case Family::TimeSeriesProcessing: return "TimeSeriesProcessing";
    case Family::FeatureAnalysis: return "FeatureAnalysis";
    case Family::DetectionAlgorithm: return "DetectionAlgorithm";
    case Family::Reinforcement: return "Reinforcement";
    }
    return "";
}

inline constexpr Family kAllFamilies[] = {Family::DataProcessing, Family::TimeSeriesProcessing,
                                         Family::FeatureAnalysis, Family::DetectionAlgorithm,
                                         Family::Reinforcement};

/// What flows along a pipeline edge.
enum class DataKind { Table, Scores, Labels };

constexpr std::string_view to_string(DataKind k) noexcept {
    switch (k) {
    case DataKind::Table: return "Table";
    case DataKind::Scores: return "Scores";
    case DataKind::Labels: return "Labels";
    }
    return "";
}

/// A table flowing through a pipeline. `row_index[r]` is the position in the
/// pipeline input that row r derives from (for windows: the window start).
struct TableValue {
    TimeSeriesDataset data;
    std::vector<std::size_t> row_index;
};

/// Output of one pipeline step. Scores and labels are always aligned to the
/// pipeline input (length n), with NaN scores where no row maps.
struct StepValue {
    DataKind kind = DataKind::Table;
    TableValue table;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;

    /// (rows, columns) for traces.
    std::pair<std::size_t, std::size_t> shape() const {
        switch (kind) {
        case DataKind::Table: return {table.data.size(), table.data.num_features()};
        case DataKind::Scores: return {scores.size(), 1};
        case DataKind::Labels: return {labels.size(), 1};
        }
        return {0, 0};
    }
};

/// Read-only context for one step: the pipeline input and, during
/// evaluation, the training mask over input positions.
struct StepContext {
    const TimeSeriesDataset& input;
    const std::vector<bool>* train_mask = nullptr;

    /// Training mask over the rows of a derived table (empty = all rows).
    std::vector<bool> table_mask(const TableValue& t) const {
        if (!train_mask) return {};
        std::vector<bool> m(t.row_index.size());
        for (std::size_t r = 0; r < m.size(); ++r) m[r] = (*train_mask)[t.row_index[r]];
        return m;
    }
};

using StepArguments = std::map<std::string, const StepValue*>;
using PrimitiveRunner = std::function<StepValue(const HyperparamMap&, const StepArguments&, const StepContext&)>;

struct ArgumentSpec {
    std::string name;
    DataKind kind = DataKind::Table;
    bool required = true;
};

struct PrimitiveDescriptor {
    std::string id;
    Family family = Family::DataProcessing;
    DataKind produces = DataKind::Table;
    std::vector<ArgumentSpec> arguments;
    std::map<std::string, HyperparamSpec> hyperparams;
    std::string description;
    /// Learns state from the training rows during evaluation.
    bool fit_capable = false;

    HyperparamMap defaults() const {
        HyperparamMap out;
        for (const auto& [name, spec] : hyperparams) out.emplace(name, spec.default_value);
        return out;
    }

    const ArgumentSpec* argument(const std::string& name) const {
        for (const auto& a : arguments)
            if (a.name == name) return &a;
        return nullptr;
    }
};

inline json to_json(const PrimitiveDescriptor& d) {
    json hps = json::object();
    for (const auto& [name, spec] : d.hyperparams) hps[name] = hp::spec_to_json(spec);
    json args = json::array();
    for (const auto& a : d.arguments)
        args.push_back({{"name", a.name}, {"kind", to_string(a.kind)}, {"required", a.required}});
    return json{{"id", d.id},
                {"family", to_string(d.family)},
                {"produces", to_string(d.produces)},
                {"arguments", args},
                {"hyperparams", hps},
                {"description", d.description},
                {"fit_capable", d.fit_capable}};
}

/// Immutable set of primitives, ordered by (family, id).
class Registry {
public:
    struct Entry {
        PrimitiveDescriptor descriptor;
        PrimitiveRunner run;
    };

    void add(PrimitiveDescriptor d, PrimitiveRunner run) {
        for (const auto& [name, spec] : d.hyperparams) hp::validate(name, spec, spec.default_value);
        const std::string id = d.id;
        if (!entries_.emplace(id, Entry{std::move(d), std::move(run)}).second)
            throw Error(ErrorCode::InvalidPipeline, "duplicate primitive id " + id);
    }

    const Entry* find(const std::string& id) const {
        auto it = entries_.find(id);
        return it == entries_.end() ? nullptr : &it->second;
    }

    const Entry& at(const std::string& id) const {
        if (const auto* e = find(id)) return *e;
        throw Error(ErrorCode::UnknownPrimitive, "unknown primitive '" + id + "'");
    }

    std::vector<PrimitiveDescriptor> list() const {
        std::vector<PrimitiveDescriptor> out;
        for (const auto& [id, e] : entries_) out.push_back(e.descriptor);
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
            return std::pair(static_cast<int>(a.family), a.id) < std::pair(static_cast<int>(b.family), b.id);
        });
        return out;
    }

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::map<std::string, Entry> entries_;
};

} // namespace tsods
