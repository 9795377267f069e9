// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tsods/dataset.hpp"
#include "tsods/error.hpp"
#include "tsods/pipeline.hpp"
#include "tsods/primitives.hpp"

namespace tsods {

// ---------------------------------------------------------------------------
// Static validation

struct Diagnostic {
    std::optional<std::size_t> step;
    std::string code;
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

inline json to_json(const Diagnostic& d) {
    json j{{"code", d.code}, {"message", d.message}};
    j["step"] = d.step ? json(*d.step) : json(nullptr);
    return j;
}

inline Diagnostic diagnostic_from_error(const Error& e) { return {e.step(), std::string(e.name()), e.what()}; }

/// Returns an empty list iff the pipeline can be executed: references point
/// backwards, argument kinds match what their producers emit, every step is
/// connected to the input, and the output is a Scores or Labels step.
inline std::vector<Diagnostic> validate(const PipelineDescription& p) {
    std::vector<Diagnostic> out;
    const auto& reg = registry();
    std::vector<std::optional<DataKind>> produces(p.steps.size());
    std::vector<bool> reachable(p.steps.size(), false);

    for (std::size_t k = 0; k < p.steps.size(); ++k) {
        const auto& step = p.steps[k];
        const auto* entry = reg.find(step.primitive_id);
        if (!entry) {
            out.push_back({k, "UnknownPrimitive", "step " + std::to_string(k) + ": unknown primitive '" + step.primitive_id + "'"});
            continue;
        }
        const auto& desc = entry->descriptor;
        produces[k] = desc.produces;

        for (const auto& [name, value] : step.hyperparams) {
            auto spec = desc.hyperparams.find(name);
            if (spec == desc.hyperparams.end()) {
                out.push_back({k, "UnknownHyperparam", "step " + std::to_string(k) + ": no hyperparameter '" + name + "'"});
                continue;
            }
            try {
                hp::validate(name, spec->second, value);
            } catch (const Error& e) {
                out.push_back({k, std::string(e.name()), "step " + std::to_string(k) + ": " + e.what()});
            }
        }
        for (const auto& [name, spec] : desc.hyperparams)
            if (!step.hyperparams.count(name))
                out.push_back({k, "MissingHyperparam", "step " + std::to_string(k) + ": hyperparameter '" + name + "' unbound"});

        if (step.arguments.empty()) {
            out.push_back({k, "OrphanStep",
                           "step " + std::to_string(k) + " (" + step.primitive_id + ") is not connected to the pipeline input"});
            continue;
        }
        bool connected = false;
        for (const auto& [name, ref] : step.arguments) {
            const auto* arg = desc.argument(name);
            if (!arg) {
                out.push_back({k, "UnknownArgument", "step " + std::to_string(k) + ": primitive '" + desc.id +
                                                         "' takes no argument '" + name + "'"});
                continue;
            }
            std::optional<DataKind> source;
            if (ref.kind == DataReference::Kind::PipelineInput) {
                source = DataKind::Table;
                connected = true;
            } else if (ref.step_index >= k) {
                out.push_back({k, "ForwardReference",
                               "step " + std::to_string(k) + " references " + ref.str() + ", which is not an earlier step"});
                continue;
            } else {
                source = produces[ref.step_index];
                connected = connected || reachable[ref.step_index];
            }
            if (source && *source != arg->kind)
                out.push_back({k, "KindMismatch", "step " + std::to_string(k) + ": argument '" + name + "' expects " +
                                                      std::string(to_string(arg->kind)) + " but " + ref.str() +
                                                      " produces " + std::string(to_string(*source))});
        }
        for (const auto& arg : desc.arguments)
            if (arg.required && !step.arguments.count(arg.name))
                out.push_back({k, "MissingArgument", "step " + std::to_string(k) + ": required argument '" + arg.name + "' not bound"});
        reachable[k] = connected;
        if (!connected)
            out.push_back({k, "OrphanStep", "step " + std::to_string(k) + " is not reachable from the pipeline input"});
    }

    if (p.outputs.size() != 1) {
        out.push_back({std::nullopt, "BadOutput", "pipeline must have exactly one output"});
    } else {
        const auto& o = p.outputs.front();
        if (o.kind != DataReference::Kind::StepOutput || o.step_index >= p.steps.size()) {
            out.push_back({std::nullopt, "BadOutput", "output must reference an existing step"});
        } else {
            const auto kind = produces[o.step_index];
            if (kind && *kind == DataKind::Table)
                out.push_back({o.step_index, "BadOutput", "output step produces a Table; expected Labels or Scores"});
            if (!reachable[o.step_index])
                out.push_back({o.step_index, "UnreachableOutput", "output is not reachable from the pipeline input"});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Execution

struct TraceStep {
    std::size_t index = 0;
    std::string primitive_id;
    std::vector<std::pair<std::size_t, std::size_t>> input_shapes;
    std::pair<std::size_t, std::size_t> output_shape{0, 0};
    double wall_time_ms = 0.0;
    bool ok = true;
    std::string error;
};

struct ExecutionTrace {
    std::vector<TraceStep> steps;
};

inline json to_json(const ExecutionTrace& t) {
    json steps = json::array();
    for (const auto& s : t.steps) {
        json shapes = json::array();
        for (const auto& [r, c] : s.input_shapes) shapes.push_back({r, c});
        json j{{"index", s.index},
               {"primitive_id", s.primitive_id},
               {"input_shapes", shapes},
               {"output_shape", {s.output_shape.first, s.output_shape.second}},
               {"wall_time_ms", s.wall_time_ms},
               {"status", s.ok ? "ok" : "failed"}};
        if (!s.ok) j["error"] = s.error;
        steps.push_back(std::move(j));
    }
    return json{{"steps", steps}};
}

/// A step raised an error; carries the trace up to and including that step.
class StepFailed : public Error {
public:
    StepFailed(std::size_t step, const std::string& primitive_id, const Error& cause, ExecutionTrace trace)
        : Error(ErrorCode::StepFailed,
                "step " + std::to_string(step) + " (" + primitive_id + ") failed: " + cause.what(), step),
          cause_(cause.code()), trace_(std::move(trace)) {}

    ErrorCode cause() const noexcept { return cause_; }
    const ExecutionTrace& trace() const noexcept { return trace_; }

private:
    ErrorCode cause_;
    ExecutionTrace trace_;
};

struct ExecutionOptions {
    /// Training rows over input positions; fit-capable primitives learn only
    /// from these. Null means all rows.
    const std::vector<bool>* train_mask = nullptr;
};

struct ExecutionResult {
    DataKind kind = DataKind::Labels;
    std::vector<double> scores;        ///< set when the output is Scores
    std::vector<std::uint8_t> labels;  ///< set when the output is Labels
    std::vector<double> final_scores;  ///< last Scores-producing step, for plotting
    ExecutionTrace trace;
};

/// Runs the steps in index order. Throws InvalidPipeline when validate()
/// reports anything, StepFailed when a primitive raises.
inline ExecutionResult execute(const PipelineDescription& p, const TimeSeriesDataset& ds,
                               const ExecutionOptions& options = {}) {
    if (auto diags = validate(p); !diags.empty())
        throw Error(ErrorCode::InvalidPipeline, diags.front().message, diags.front().step);
    ds.check_invariants();
    if (options.train_mask && options.train_mask->size() != ds.size())
        throw Error(ErrorCode::LengthMismatch, "train mask length differs from dataset length");

    StepValue input;
    input.kind = DataKind::Table;
    input.table.data = ds;
    input.table.row_index.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) input.table.row_index[i] = i;

    const StepContext ctx{ds, options.train_mask};
    const auto& reg = registry();
    std::vector<StepValue> outputs(p.steps.size());
    ExecutionResult result;

    for (std::size_t k = 0; k < p.steps.size(); ++k) {
        const auto& step = p.steps[k];
        const auto& entry = reg.at(step.primitive_id);
        TraceStep ts;
        ts.index = k;
        ts.primitive_id = step.primitive_id;
        StepArguments args;
        for (const auto& [name, ref] : step.arguments) {
            const StepValue* v = ref.kind == DataReference::Kind::PipelineInput ? &input : &outputs[ref.step_index];
            args.emplace(name, v);
            ts.input_shapes.push_back(v->shape());
        }
        const auto start = std::chrono::steady_clock::now();
        try {
            outputs[k] = entry.run(step.hyperparams, args, ctx);
        } catch (const Error& e) {
            ts.ok = false;
            ts.error = e.what();
            ts.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            result.trace.steps.push_back(std::move(ts));
            throw StepFailed(k, step.primitive_id, e, std::move(result.trace));
        }
        ts.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        ts.output_shape = outputs[k].shape();
        result.trace.steps.push_back(std::move(ts));
        if (outputs[k].kind == DataKind::Scores) result.final_scores = outputs[k].scores;
    }

    auto& out = outputs[p.outputs.front().step_index];
    result.kind = out.kind;
    if (out.kind == DataKind::Scores) result.scores = std::move(out.scores);
    else result.labels = std::move(out.labels);
    return result;
}

// ---------------------------------------------------------------------------
// Data preparation: splitting

struct SplitScheme {
    enum class Kind { KFold, Holdout };
    Kind kind = Kind::KFold;
    std::size_t k = 5;
    double train_fraction = 0.8;

    static SplitScheme kfold(std::size_t k) { return {Kind::KFold, k, 0.0}; }
    static SplitScheme holdout(double f) { return {Kind::Holdout, 0, f}; }

    std::string str() const {
        if (kind == Kind::KFold) return "kfold:" + std::to_string(k);
        return "holdout:" + json(train_fraction).dump();
    }

    /// "kfold", "kfold:K", "holdout" or "holdout:F".
    static SplitScheme parse(const std::string& s) {
        auto bad = [&] { return Error(ErrorCode::BadScheme, "unrecognized split scheme '" + s + "'"); };
        const auto colon = s.find(':');
        const std::string name = s.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
        try {
            std::size_t used = 0;
            if (name == "kfold") {
                if (arg.empty()) return kfold(5);
                const long long k = std::stoll(arg, &used);
                if (used != arg.size() || k < 2) throw bad();
                return kfold(static_cast<std::size_t>(k));
            }
            if (name == "holdout") {
                if (arg.empty()) return holdout(0.8);
                const double f = std::stod(arg, &used);
                if (used != arg.size()) throw bad();
                return holdout(f);
            }
        } catch (const std::logic_error&) {
            throw bad();
        }
        throw bad();
    }

    bool operator==(const SplitScheme&) const = default;
};

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct SplitPlan {
    SplitScheme scheme;
    std::vector<Fold> folds;
    std::uint64_t seed = 0;
};

/// Time-ordered splits without shuffling. k-fold test block b covers
/// [floor(b n / k), floor((b+1) n / k)); holdout trains on the first
/// ceil(f n) indices.
inline SplitPlan make_splits(std::size_t n, const SplitScheme& scheme, std::uint64_t seed = 0) {
    SplitPlan plan{scheme, {}, seed};
    if (scheme.kind == SplitScheme::Kind::KFold) {
        if (scheme.k < 2 || n < scheme.k)
            throw Error(ErrorCode::BadScheme, "k-fold needs n >= k >= 2 (n = " + std::to_string(n) +
                                                  ", k = " + std::to_string(scheme.k) + ")");
        for (std::size_t b = 0; b < scheme.k; ++b) {
            const std::size_t lo = b * n / scheme.k, hi = (b + 1) * n / scheme.k;
            Fold f;
            for (std::size_t i = 0; i < n; ++i) (i >= lo && i < hi ? f.test : f.train).push_back(i);
            plan.folds.push_back(std::move(f));
        }
    } else {
        const double f = scheme.train_fraction;
        if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::BadScheme, "holdout fraction must be in (0, 1)");
        const auto cut = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
        if (cut == 0 || cut >= n)
            throw Error(ErrorCode::BadScheme, "holdout fraction leaves an empty train or test set");
        Fold fold;
        for (std::size_t i = 0; i < n; ++i) (i < cut ? fold.train : fold.test).push_back(i);
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Scoring

enum class Metric { Precision, Recall, F1, F1PointAdjusted };

constexpr std::string_view to_string(Metric m) noexcept {
    switch (m) {
    case Metric::Precision: return "precision";
    case Metric::Recall: return "recall";
    case Metric::F1: return "f1";
    case Metric::F1PointAdjusted: return "f1_pa";
    }
    return "";
}

inline Metric parse_metric(const std::string& s) {
    if (s == "precision") return Metric::Precision;
    if (s == "recall") return Metric::Recall;
    if (s == "f1") return Metric::F1;
    if (s == "f1_pa" || s == "f1_point_adjusted") return Metric::F1PointAdjusted;
    throw Error(ErrorCode::BadMetric, "unknown metric '" + s + "' (expected precision, recall, f1 or f1_pa)");
}

struct ScoreReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double precision_pa = 0.0;
    double recall_pa = 0.0;
    double f1_pa = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    Metric primary = Metric::F1;

    double value(Metric m) const {
        switch (m) {
        case Metric::Precision: return precision;
        case Metric::Recall: return recall;
        case Metric::F1: return f1;
        case Metric::F1PointAdjusted: return f1_pa;
        }
        return 0.0;
    }
    double primary_value() const { return value(primary); }
};

namespace scoring {
inline double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
inline double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }
} // namespace scoring

/// Plain and point-adjusted precision/recall/F1. Point adjustment counts
/// every point of a maximal run of true anomalies as detected when any point
/// of the run is predicted.
inline ScoreReport score(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                         Metric primary = Metric::F1) {
    if (truth.empty()) throw Error(ErrorCode::MissingGroundTruth, "no ground-truth labels");
    if (predicted.size() != truth.size())
        throw Error(ErrorCode::LengthMismatch, "predicted length " + std::to_string(predicted.size()) +
                                                   " differs from truth length " + std::to_string(truth.size()));
    ScoreReport r;
    r.primary = primary;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] != 0, t = truth[i] != 0;
        if (p && t) ++r.tp;
        else if (p) ++r.fp;
        else if (t) ++r.fn;
        else ++r.tn;
    }
    r.precision = scoring::ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fp));
    r.recall = scoring::ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fn));
    r.f1 = scoring::harmonic(r.precision, r.recall);

    std::size_t tp_pa = 0, fn_pa = 0;
    for (std::size_t i = 0; i < truth.size();) {
        if (!truth[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        bool hit = false;
        for (; j < truth.size() && truth[j]; ++j) hit = hit || predicted[j] != 0;
        (hit ? tp_pa : fn_pa) += j - i;
        i = j;
    }
    r.precision_pa = scoring::ratio(static_cast<double>(tp_pa), static_cast<double>(tp_pa + r.fp));
    r.recall_pa = scoring::ratio(static_cast<double>(tp_pa), static_cast<double>(tp_pa + fn_pa));
    r.f1_pa = scoring::harmonic(r.precision_pa, r.recall_pa);
    return r;
}

inline json to_json(const ScoreReport& r) {
    return json{{"primary_metric", to_string(r.primary)},
                {"scores", {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"f1_pa", r.f1_pa}}},
                {"counts", {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn}}}};
}

/// Metric-wise mean over folds with summed counts.
inline ScoreReport mean_report(const std::vector<ScoreReport>& folds) {
    ScoreReport m;
    if (folds.empty()) return m;
    m.primary = folds.front().primary;
    for (const auto& f : folds) {
        m.precision += f.precision;
        m.recall += f.recall;
        m.f1 += f.f1;
        m.precision_pa += f.precision_pa;
        m.recall_pa += f.recall_pa;
        m.f1_pa += f.f1_pa;
        m.tp += f.tp;
        m.fp += f.fp;
        m.fn += f.fn;
        m.tn += f.tn;
    }
    const auto k = static_cast<double>(folds.size());
    m.precision /= k;
    m.recall /= k;
    m.f1 /= k;
    m.precision_pa /= k;
    m.recall_pa /= k;
    m.f1_pa /= k;
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationResult {
    SplitPlan plan;
    std::vector<ScoreReport> folds;
    double aggregate = 0.0; ///< unweighted mean of the primary metric over folds
};

/// Per fold: fit-capable primitives fit on the train indices, the pipeline
/// produces labels for the whole series, and the labels are scored on the
/// test indices only.
inline EvaluationResult evaluate_pipeline(const TimeSeriesDataset& ds, const PipelineDescription& p,
                                          Metric primary = Metric::F1, const SplitScheme& scheme = SplitScheme::kfold(5),
                                          std::uint64_t seed = 0) {
    if (!ds.has_labels()) throw Error(ErrorCode::MissingGroundTruth, "dataset has no target labels");
    if (auto diags = validate(p); !diags.empty())
        throw Error(ErrorCode::InvalidPipeline, diags.front().message, diags.front().step);
    if (registry().at(p.steps[p.outputs.front().step_index].primitive_id).descriptor.produces != DataKind::Labels)
        throw Error(ErrorCode::BadOutput, "evaluation needs a pipeline whose output is Labels");

    EvaluationResult res;
    res.plan = make_splits(ds.size(), scheme, seed);
    const auto& truth = *ds.labels;
    for (const auto& fold : res.plan.folds) {
        std::vector<bool> mask(ds.size(), false);
        for (auto i : fold.train) mask[i] = true;
        const auto run = execute(p, ds, {&mask});
        std::vector<std::uint8_t> pred, tru;
        pred.reserve(fold.test.size());
        tru.reserve(fold.test.size());
        for (auto i : fold.test) {
            pred.push_back(run.labels[i]);
            tru.push_back(truth[i]);
        }
        res.folds.push_back(score(pred, tru, primary));
    }
    double sum = 0.0;
    for (const auto& f : res.folds) sum += f.primary_value();
    res.aggregate = sum / static_cast<double>(res.folds.size());
    return res;
}

inline json to_json(const EvaluationResult& e) {
    json folds = json::array();
    for (const auto& f : e.folds) folds.push_back(to_json(f));
    json j = to_json(mean_report(e.folds));
    j["folds"] = folds;
    j["aggregate"] = e.aggregate;
    j["scheme"] = e.plan.scheme.str();
    return j;
}

} // namespace tsods
