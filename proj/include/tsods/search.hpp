// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tsods/engine.hpp"
#include "tsods/pipeline.hpp"
#include "tsods/random.hpp"

namespace tsods {

inline constexpr std::array<std::string_view, 4> kSlotNames = {"data_processing", "ts_processing",
                                                               "feature_analysis", "detection"};
inline constexpr std::array<Family, 4> kSlotFamilies = {Family::DataProcessing, Family::TimeSeriesProcessing,
                                                        Family::FeatureAnalysis, Family::DetectionAlgorithm};

/// One primitive in a slot with explicit value lists per hyperparameter.
/// Unlisted hyperparameters keep their defaults.
struct SlotCandidate {
    std::string primitive;
    std::map<std::string, std::vector<HyperparamValue>> grid;

    std::size_t size() const {
        std::size_t s = 1;
        for (const auto& [name, values] : grid) s *= values.size();
        return s;
    }

    /// Grid point `i`; keys in sorted order, last key varying fastest.
    HyperparamMap point(std::size_t i) const {
        HyperparamMap out;
        for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
            const auto m = it->second.size();
            out.emplace(it->first, it->second[i % m]);
            i /= m;
        }
        return out;
    }
};

/// Four template slots, each a list of candidates, then a threshold over the
/// detector scores and an optional fixed rule filter.
struct SearchSpace {
    std::array<std::vector<SlotCandidate>, 4> slots;
    std::vector<double> contamination{0.01};
    std::optional<RuleList> reinforcement;

    std::size_t slot_choices(std::size_t s) const {
        std::size_t c = 0;
        for (const auto& cand : slots[s]) c += cand.size();
        return c;
    }

    /// Product of per-slot choice counts times the contamination grid.
    std::size_t size() const {
        std::size_t s = contamination.size();
        for (std::size_t i = 0; i < slots.size(); ++i) s *= slot_choices(i);
        return s;
    }
};

inline void check_space(const SearchSpace& space) {
    for (std::size_t s = 0; s < space.slots.size(); ++s)
        if (space.slot_choices(s) == 0)
            throw Error(ErrorCode::EmptySlot, "search-space slot '" + std::string(kSlotNames[s]) + "' has no choices");
    if (space.contamination.empty()) throw Error(ErrorCode::EmptySlot, "threshold contamination grid is empty");
}

namespace search_detail {

inline Error bad_space(const std::string& msg) { return Error(ErrorCode::InvalidSearchSpace, msg); }

inline SlotCandidate parse_candidate(const json& j, std::size_t slot) {
    const std::string where = "slot '" + std::string(kSlotNames[slot]) + "'";
    if (!j.is_object() || !j.contains("primitive") || !j["primitive"].is_string())
        throw bad_space(where + ": each candidate needs a string 'primitive'");
    for (const auto& [key, _] : j.items())
        if (key != "primitive" && key != "grid") throw bad_space(where + ": unknown candidate key '" + key + "'");
    SlotCandidate c;
    c.primitive = j["primitive"].get<std::string>();
    const auto* entry = registry().find(c.primitive);
    if (!entry) throw bad_space(where + ": unknown primitive '" + c.primitive + "'");
    const auto& desc = entry->descriptor;
    if (desc.family != kSlotFamilies[slot] || (slot == 3 && desc.produces != DataKind::Scores))
        throw bad_space(where + ": primitive '" + c.primitive + "' does not fit this slot");
    if (j.contains("grid")) {
        if (!j["grid"].is_object()) throw bad_space(where + ": 'grid' must be an object");
        for (const auto& [name, values] : j["grid"].items()) {
            auto spec = desc.hyperparams.find(name);
            if (spec == desc.hyperparams.end())
                throw bad_space(where + ": primitive '" + c.primitive + "' has no hyperparameter '" + name + "'");
            if (!values.is_array() || values.empty())
                throw bad_space(where + ": grid for '" + name + "' must be a non-empty list");
            auto& list = c.grid[name];
            for (const auto& v : values) {
                try {
                    auto value = hp::from_json(v, spec->second, name);
                    hp::validate(name, spec->second, value);
                    list.push_back(std::move(value));
                } catch (const Error& e) {
                    throw bad_space(where + ": " + e.what());
                }
            }
        }
    }
    return c;
}

} // namespace search_detail

/// {slots: {name: [{primitive, grid: {hp: [values]}}]}, threshold:
/// {contamination: [..]}, reinforcement: {rules: [..]} | null}
inline SearchSpace parse_search_space(const json& j) {
    using search_detail::bad_space;
    if (!j.is_object()) throw bad_space("search space must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "slots" && key != "threshold" && key != "reinforcement")
            throw bad_space("unknown search-space key '" + key + "'");
    if (!j.contains("slots") || !j["slots"].is_object()) throw bad_space("search space needs a 'slots' object");

    SearchSpace space;
    for (const auto& [name, list] : j["slots"].items()) {
        const auto it = std::find(kSlotNames.begin(), kSlotNames.end(), name);
        if (it == kSlotNames.end()) throw bad_space("unknown slot '" + name + "'");
        if (!list.is_array()) throw bad_space("slot '" + name + "' must be a list");
        const auto s = static_cast<std::size_t>(it - kSlotNames.begin());
        for (const auto& c : list) space.slots[s].push_back(search_detail::parse_candidate(c, s));
    }

    if (j.contains("threshold") && !j["threshold"].is_null()) {
        const auto& t = j["threshold"];
        if (!t.is_object() || !t.contains("contamination") || !t["contamination"].is_array())
            throw bad_space("'threshold' must be {\"contamination\": [..]}");
        const auto& spec = registry().at("tods.detection.threshold").descriptor.hyperparams.at("contamination");
        space.contamination.clear();
        for (const auto& v : t["contamination"]) {
            try {
                auto value = hp::from_json(v, spec, "contamination");
                hp::validate("contamination", spec, value);
                space.contamination.push_back(std::get<double>(value));
            } catch (const Error& e) {
                throw bad_space(std::string("threshold: ") + e.what());
            }
        }
    }

    if (j.contains("reinforcement") && !j["reinforcement"].is_null()) {
        const auto& r = j["reinforcement"];
        if (!r.is_object() || !r.contains("rules")) throw bad_space("'reinforcement' must be {\"rules\": [..]} or null");
        const auto& spec = registry().at("tods.reinforcement.rule_based_filter").descriptor.hyperparams.at("rules");
        try {
            auto value = hp::from_json(r["rules"], spec, "rules");
            hp::validate("rules", spec, value);
            space.reinforcement = std::get<RuleList>(value);
        } catch (const Error& e) {
            throw bad_space(std::string("reinforcement: ") + e.what());
        }
    }
    check_space(space);
    return space;
}

inline SearchSpace parse_search_space(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedJson, e.what());
    }
    return parse_search_space(j);
}

inline SearchSpace parse_search_space(const std::string& text) { return parse_search_space(std::string_view(text)); }
inline SearchSpace parse_search_space(const char* text) { return parse_search_space(std::string_view(text)); }

inline json to_json(const SearchSpace& space) {
    json slots = json::object();
    for (std::size_t s = 0; s < space.slots.size(); ++s) {
        json list = json::array();
        for (const auto& c : space.slots[s]) {
            json grid = json::object();
            for (const auto& [name, values] : c.grid) {
                json vs = json::array();
                for (const auto& v : values) vs.push_back(hp::to_json(v));
                grid[name] = vs;
            }
            list.push_back({{"primitive", c.primitive}, {"grid", grid}});
        }
        slots[std::string(kSlotNames[s])] = list;
    }
    json j{{"slots", slots}, {"threshold", {{"contamination", space.contamination}}}};
    if (space.reinforcement) j["reinforcement"] = {{"rules", hp::to_json(*space.reinforcement)}};
    else j["reinforcement"] = nullptr;
    return j;
}

inline constexpr std::string_view kDefaultSearchSpace = R"({
  "slots": {
    "data_processing": [
      {"primitive": "tods.data_processing.timestamp_validation", "grid": {"policy": ["sort"]}},
      {"primitive": "tods.data_processing.impute_missing", "grid": {"strategy": ["linear"]}}
    ],
    "ts_processing": [
      {"primitive": "tods.timeseries_processing.standardize"}
    ],
    "feature_analysis": [
      {"primitive": "tods.feature_analysis.window_statistics", "grid": {"window": [1, 4], "stride": [1]}}
    ],
    "detection": [
      {"primitive": "tods.detection.iforest", "grid": {"n_trees": [100], "subsample_size": [64], "seed": [0]}},
      {"primitive": "tods.detection.knn", "grid": {"k": [3]}},
      {"primitive": "tods.detection.zscore"}
    ]
  },
  "threshold": {"contamination": [0.005]},
  "reinforcement": null
})";

inline SearchSpace default_search_space() { return parse_search_space(kDefaultSearchSpace); }

/// Candidate `ordinal` of the enumeration: mixed radix over (data, ts,
/// feature, detection, contamination) with the last position fastest; inside
/// a slot, candidates in listed order, then their grid points.
inline PipelineDescription candidate_at(const SearchSpace& space, std::size_t ordinal) {
    check_space(space);
    if (ordinal >= space.size()) throw Error(ErrorCode::InvalidSearchSpace, "candidate ordinal out of range");
    std::array<std::size_t, 5> digit{};
    digit[4] = ordinal % space.contamination.size();
    ordinal /= space.contamination.size();
    for (std::size_t s = 4; s-- > 0;) {
        const auto m = space.slot_choices(s);
        digit[s] = ordinal % m;
        ordinal /= m;
    }
    std::vector<std::pair<std::string, HyperparamMap>> steps;
    for (std::size_t s = 0; s < 4; ++s) {
        std::size_t d = digit[s];
        for (const auto& c : space.slots[s]) {
            if (d < c.size()) {
                steps.emplace_back(c.primitive, c.point(d));
                break;
            }
            d -= c.size();
        }
    }
    steps.emplace_back("tods.detection.threshold", HyperparamMap{{"contamination", space.contamination[digit[4]]}});
    if (space.reinforcement)
        steps.emplace_back("tods.reinforcement.rule_based_filter", HyperparamMap{{"rules", *space.reinforcement}});
    return chain_pipeline(steps);
}

inline std::vector<PipelineDescription> enumerate_space(const SearchSpace& space) {
    check_space(space);
    std::vector<PipelineDescription> out;
    out.reserve(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) out.push_back(candidate_at(space, i));
    return out;
}

// ---------------------------------------------------------------------------

enum class SearchStrategy { Random, Exhaustive };

inline SearchStrategy parse_strategy(const std::string& s) {
    if (s == "random") return SearchStrategy::Random;
    if (s == "exhaustive") return SearchStrategy::Exhaustive;
    throw Error(ErrorCode::InvalidSearchSpace, "unknown search strategy '" + s + "' (expected random or exhaustive)");
}

struct SearchOptions {
    SearchStrategy strategy = SearchStrategy::Random;
    std::size_t budget = 20;
    std::uint64_t seed = 42;
    SplitScheme scheme = SplitScheme::kfold(5);
    Metric metric = Metric::F1;
    std::size_t workers = 0; ///< 0: hardware concurrency
};

struct SearchRecord {
    std::size_t ordinal = 0; ///< position in enumerate_space order
    std::size_t rank = 0;    ///< 1-based leaderboard position
    PipelineDescription pipeline;
    std::vector<ScoreReport> folds;
    double aggregate = -1.0;
    double wall_time_ms = 0.0;
    bool ok = false;
    std::string error;
};

struct SearchResult {
    std::vector<SearchRecord> leaderboard; ///< sorted by (aggregate desc, ordinal asc)
    std::size_t space_size = 0;
    std::size_t evaluations = 0;

    const SearchRecord& best() const { return leaderboard.front(); }
};

inline SearchRecord evaluate_candidate(const TimeSeriesDataset& ds, const PipelineDescription& p, std::size_t ordinal,
                                       const SearchOptions& opt) {
    SearchRecord rec;
    rec.ordinal = ordinal;
    rec.pipeline = p;
    const auto start = std::chrono::steady_clock::now();
    try {
        auto ev = evaluate_pipeline(ds, p, opt.metric, opt.scheme, opt.seed);
        rec.folds = std::move(ev.folds);
        rec.aggregate = ev.aggregate;
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.aggregate = -1.0;
        rec.error = e.what();
    }
    rec.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

/// Ordinals the strategy evaluates, in evaluation order.
inline std::vector<std::size_t> search_plan(const SearchSpace& space, const SearchOptions& opt) {
    if (opt.budget == 0) throw Error(ErrorCode::BudgetZero, "search budget must be at least 1");
    check_space(space);
    const std::size_t count = std::min(opt.budget, space.size());
    std::vector<std::size_t> ordinals;
    if (opt.strategy == SearchStrategy::Exhaustive) {
        for (std::size_t i = 0; i < count; ++i) ordinals.push_back(i);
    } else {
        Rng rng(opt.seed);
        for (auto o : sample_without_replacement(space.size(), count, rng)) ordinals.push_back(static_cast<std::size_t>(o));
    }
    return ordinals;
}

/// Evaluates min(budget, size) candidates on a bounded worker pool. Records
/// are merged by ordinal, so the result does not depend on scheduling.
inline SearchResult search(const TimeSeriesDataset& ds, const SearchSpace& space, const SearchOptions& opt = {}) {
    if (opt.budget == 0) throw Error(ErrorCode::BudgetZero, "search budget must be at least 1");
    if (!ds.has_labels()) throw Error(ErrorCode::NoLabels, "search needs a dataset with target labels");
    const auto ordinals = search_plan(space, opt);

    std::vector<SearchRecord> records(ordinals.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < ordinals.size(); i = next++)
            records[i] = evaluate_candidate(ds, candidate_at(space, ordinals[i]), ordinals[i], opt);
    };
    std::size_t workers = opt.workers ? opt.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, ordinals.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    std::sort(records.begin(), records.end(), [](const SearchRecord& a, const SearchRecord& b) {
        if (a.aggregate != b.aggregate) return a.aggregate > b.aggregate;
        return a.ordinal < b.ordinal;
    });
    for (std::size_t i = 0; i < records.size(); ++i) records[i].rank = i + 1;
    return {std::move(records), space.size(), ordinals.size()};
}

inline std::string export_best(const SearchRecord& record) {
    if (!record.ok)
        throw Error(ErrorCode::FailedCandidate, "candidate " + std::to_string(record.ordinal) + " failed: " + record.error);
    return serialize_pipeline(record.pipeline);
}

inline json to_json(const SearchRecord& r) {
    json folds = json::array();
    for (const auto& f : r.folds) folds.push_back(f.primary_value());
    json steps = json::array();
    for (const auto& s : r.pipeline.steps) steps.push_back(s.primitive_id);
    json j{{"rank", r.rank},
           {"ordinal", r.ordinal},
           {"pipeline_id", r.pipeline.id},
           {"steps", steps},
           {"pipeline", to_json(r.pipeline)},
           {"aggregate", r.aggregate},
           {"folds", folds},
           {"wall_time_ms", r.wall_time_ms},
           {"status", r.ok ? "ok" : "failed"}};
    if (!r.ok) j["error"] = r.error;
    return j;
}

inline json to_json(const SearchResult& r) {
    json board = json::array();
    for (const auto& rec : r.leaderboard) board.push_back(to_json(rec));
    json j{{"leaderboard", board}, {"space_size", r.space_size}, {"evaluations", r.evaluations}};
    if (!r.leaderboard.empty() && r.best().ok) j["best_pipeline"] = to_json(r.best().pipeline);
    else j["best_pipeline"] = nullptr;
    return j;
}

} // namespace tsods
