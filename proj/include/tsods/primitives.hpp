// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tsods/detection.hpp"
#include "tsods/features.hpp"
#include "tsods/processing.hpp"
#include "tsods/registry.hpp"

namespace tsods {

namespace primitives {

using processing::kNaN;

inline const StepValue& input_arg(const StepArguments& args, const std::string& name = "inputs") {
    auto it = args.find(name);
    if (it == args.end() || it->second == nullptr)
        throw Error(ErrorCode::InvalidPipeline, "missing argument '" + name + "'");
    return *it->second;
}

inline StepValue table_value(TableValue t) {
    StepValue v;
    v.kind = DataKind::Table;
    v.table = std::move(t);
    return v;
}

/// Scatters per-row detector scores back onto pipeline-input positions.
inline StepValue aligned_scores(const std::vector<std::size_t>& row_index, const std::vector<double>& row_scores,
                                std::size_t n) {
    StepValue v;
    v.kind = DataKind::Scores;
    v.scores.assign(n, kNaN);
    for (std::size_t r = 0; r < row_index.size(); ++r) v.scores[row_index[r]] = row_scores[r];
    return v;
}

/// Applies a same-length column transform to every feature column.
inline TableValue map_columns(const TableValue& in,
                              const std::function<std::vector<double>(std::span<const double>)>& fn) {
    TableValue out = in;
    for (auto& col : out.data.features) col = fn(col);
    return out;
}

/// Table whose rows are the given per-row feature tables, one block of
/// columns per input column (prefixed "<column>_"). All parts must share rows.
inline TableValue windowed_table(const TableValue& in, const std::vector<FeatureTable>& parts) {
    TableValue out;
    const auto& first = parts.front();
    out.data.name = in.data.name;
    for (auto r : first.row_index) {
        out.data.timestamps.push_back(in.data.timestamps[r]);
        out.row_index.push_back(in.row_index[r]);
    }
    for (std::size_t p = 0; p < parts.size(); ++p) {
        for (std::size_t c = 0; c < parts[p].cols(); ++c) {
            out.data.feature_names.push_back(in.data.feature_names[p] + "_" + parts[p].column_names[c]);
            std::vector<double> col(parts[p].rows());
            for (std::size_t r = 0; r < parts[p].rows(); ++r) col[r] = parts[p].values(r, c);
            out.data.features.push_back(std::move(col));
        }
    }
    return out;
}

inline FeatureTable as_features(const TableValue& t) { return to_feature_table(t.data); }

/// Windows of one column with rows that contain NaN marked.
inline FeatureTable per_window(std::span<const double> x, long long window, long long stride, std::size_t out_cols,
                               std::vector<std::string> names,
                               const std::function<std::vector<double>(std::span<const double>)>& fn) {
    auto seg = processing::segment_subsequences(x, window, stride);
    FeatureTable t;
    t.values = Matrix(seg.rows.rows(), out_cols);
    for (std::size_t i = 0; i < seg.rows.rows(); ++i) {
        auto w = seg.rows.row(i);
        const bool has_nan = std::any_of(w.begin(), w.end(), [](double v) { return std::isnan(v); });
        std::vector<double> vals = has_nan ? std::vector<double>(out_cols, kNaN) : fn(w);
        for (std::size_t c = 0; c < out_cols; ++c) t.values(i, c) = vals[c];
    }
    t.row_index = std::move(seg.starts);
    t.column_names = std::move(names);
    return t;
}

inline ArgumentSpec table_input() { return {"inputs", DataKind::Table, true}; }

inline HyperparamSpec column_hp() {
    return HyperparamSpec::text("", "feature column to use; empty selects the first column");
}

inline void add_processing(Registry& reg) {
    using processing::DuplicatePolicy;
    using processing::SortPolicy;

    reg.add({"tods.data_processing.timestamp_validation",
             Family::DataProcessing,
             DataKind::Table,
             {table_input()},
             {{"policy", HyperparamSpec::choice("sort", {"sort", "error"}, "unsorted timestamps: sort rows or fail")},
              {"duplicate_policy", HyperparamSpec::choice("keep_first", {"keep_first", "error"},
                                                          "repeated timestamps: keep the first row or fail")}},
             "Ensures timestamps are strictly increasing.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto& in = input_arg(args).table;
                const auto policy = hp::get_string(h, "policy") == "error" ? SortPolicy::Error : SortPolicy::Sort;
                const auto dup = hp::get_string(h, "duplicate_policy") == "error" ? DuplicatePolicy::Error
                                                                                  : DuplicatePolicy::KeepFirst;
                const auto rows = processing::validated_row_order(in.data.timestamps, policy, dup);
                TableValue out{in.data.select_rows(rows), {}};
                for (auto r : rows) out.row_index.push_back(in.row_index[r]);
                return table_value(std::move(out));
            });

    reg.add({"tods.data_processing.impute_missing",
             Family::DataProcessing,
             DataKind::Table,
             {table_input()},
             {{"strategy", HyperparamSpec::choice("linear", {"mean", "forward_fill", "linear"},
                                                  "how missing cells are filled")}},
             "Fills missing (NaN) cells column by column.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto& s = hp::get_string(h, "strategy");
                const auto strategy = s == "mean"           ? processing::ImputeStrategy::Mean
                                      : s == "forward_fill" ? processing::ImputeStrategy::ForwardFill
                                                            : processing::ImputeStrategy::Linear;
                const auto& in = input_arg(args).table;
                return table_value({processing::impute_missing(in.data, strategy), in.row_index});
            });

    reg.add({"tods.timeseries_processing.moving_average",
             Family::TimeSeriesProcessing,
             DataKind::Table,
             {table_input()},
             {{"window", HyperparamSpec::integer(5, 1, {}, "window width")},
              {"mode", HyperparamSpec::choice("centered_truncated", {"centered_truncated"}, "edge handling")}},
             "Centered moving average, truncated at the series edges.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto w = hp::get_int(h, "window");
                return table_value(map_columns(input_arg(args).table, [w](std::span<const double> x) {
                    return processing::moving_average(x, w);
                }));
            });

    reg.add({"tods.timeseries_processing.difference",
             Family::TimeSeriesProcessing,
             DataKind::Table,
             {table_input()},
             {{"order", HyperparamSpec::integer(1, 1, 100, "number of differencing passes")}},
             "Repeated first differences; drops the first `order` rows.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto order = hp::get_int(h, "order");
                const auto& in = input_arg(args).table;
                if (in.data.size() <= static_cast<std::size_t>(order))
                    throw Error(ErrorCode::OrderTooLarge, "order exceeds table length");
                std::vector<std::size_t> rows;
                for (std::size_t r = static_cast<std::size_t>(order); r < in.data.size(); ++r) rows.push_back(r);
                TableValue out{in.data.select_rows(rows), {}};
                for (auto r : rows) out.row_index.push_back(in.row_index[r]);
                for (std::size_t c = 0; c < out.data.features.size(); ++c)
                    out.data.features[c] = processing::difference(in.data.features[c], order);
                return table_value(std::move(out));
            });

    reg.add({"tods.timeseries_processing.seasonal_decomposition",
             Family::TimeSeriesProcessing,
             DataKind::Table,
             {table_input()},
             {{"period", HyperparamSpec::integer(12, 2, {}, "season length in samples")},
              {"model", HyperparamSpec::choice("additive", {"additive"}, "decomposition model")}},
             "Classical decomposition into trend, seasonal and residual columns.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto period = hp::get_int(h, "period");
                const auto& in = input_arg(args).table;
                TableValue out = in;
                out.data.features.clear();
                out.data.feature_names.clear();
                for (std::size_t c = 0; c < in.data.num_features(); ++c) {
                    auto d = processing::seasonal_decomposition(in.data.features[c], period);
                    const auto& name = in.data.feature_names[c];
                    out.data.feature_names.push_back(name + "_trend");
                    out.data.features.push_back(std::move(d.trend));
                    out.data.feature_names.push_back(name + "_seasonal");
                    out.data.features.push_back(std::move(d.seasonal));
                    out.data.feature_names.push_back(name + "_residual");
                    out.data.features.push_back(std::move(d.residual));
                }
                return table_value(std::move(out));
            });

    reg.add({"tods.timeseries_processing.standardize",
             Family::TimeSeriesProcessing,
             DataKind::Table,
             {table_input()},
             {},
             "Per-column (x - mean) / std with statistics from the training rows.",
             true},
            [](const HyperparamMap&, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                const auto state = processing::standardize_fit(in.data, ctx.table_mask(in));
                return table_value({processing::standardize_produce(state, in.data), in.row_index});
            });

    reg.add({"tods.timeseries_processing.subsequence_segmentation",
             Family::TimeSeriesProcessing,
             DataKind::Table,
             {table_input()},
             {{"column", column_hp()},
              {"window", HyperparamSpec::integer(16, 1, {}, "subsequence length")},
              {"stride", HyperparamSpec::integer(1, 1, {}, "step between subsequence starts")}},
             "One row per subsequence of a column; rows attribute to their start.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto& in = input_arg(args).table;
                const auto c = in.data.resolve_column(hp::get_string(h, "column"));
                auto seg = processing::segment_subsequences(in.data.features[c], hp::get_int(h, "window"),
                                                            hp::get_int(h, "stride"));
                FeatureTable t{std::move(seg.rows), std::move(seg.starts), {}};
                for (std::size_t k = 0; k < t.cols(); ++k) t.column_names.push_back("t" + std::to_string(k));
                TableValue single = in;
                single.data.feature_names = {in.data.feature_names[c]};
                single.data.features = {in.data.features[c]};
                return table_value(windowed_table(single, {t}));
            });
}

inline void add_features(Registry& reg) {
    reg.add({"tods.feature_analysis.window_statistics",
             Family::FeatureAnalysis,
             DataKind::Table,
             {table_input()},
             {{"window", HyperparamSpec::integer(8, 1, {}, "window length")},
              {"stride", HyperparamSpec::integer(1, 1, {}, "step between window starts")}},
             "Mean, std, min, max, skewness and excess kurtosis per window.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto& in = input_arg(args).table;
                std::vector<FeatureTable> parts;
                for (const auto& col : in.data.features)
                    parts.push_back(features::window_statistics(col, hp::get_int(h, "window"), hp::get_int(h, "stride")));
                return table_value(windowed_table(in, parts));
            });

    reg.add({"tods.feature_analysis.autocorrelation",
             Family::FeatureAnalysis,
             DataKind::Table,
             {table_input()},
             {{"window", HyperparamSpec::integer(32, 2, {}, "window length")},
              {"stride", HyperparamSpec::integer(1, 1, {}, "step between window starts")},
              {"max_lag", HyperparamSpec::integer(4, 1, {}, "largest lag reported")}},
             "Autocorrelation at lags 1..max_lag of each window.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto& in = input_arg(args).table;
                const auto lag = hp::get_int(h, "max_lag");
                if (lag >= hp::get_int(h, "window"))
                    throw Error(ErrorCode::LagTooLarge, "max_lag must be smaller than window");
                std::vector<std::string> names;
                for (long long k = 1; k <= lag; ++k) names.push_back("acf_" + std::to_string(k));
                std::vector<FeatureTable> parts;
                for (const auto& col : in.data.features)
                    parts.push_back(per_window(col, hp::get_int(h, "window"), hp::get_int(h, "stride"),
                                               static_cast<std::size_t>(lag), names, [lag](std::span<const double> w) {
                                                   auto r = features::autocorrelation(w, lag);
                                                   return std::vector<double>(r.begin() + 1, r.end());
                                               }));
                return table_value(windowed_table(in, parts));
            });

    reg.add({"tods.feature_analysis.dft_magnitudes",
             Family::FeatureAnalysis,
             DataKind::Table,
             {table_input()},
             {{"window", HyperparamSpec::integer(16, 2, {}, "window length")},
              {"stride", HyperparamSpec::integer(1, 1, {}, "step between window starts")},
              {"n_bins", HyperparamSpec::integer(4, 1, {}, "number of non-DC frequency bins")}},
             "Discrete Fourier magnitudes of bins 1..n_bins per window.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                const auto& in = input_arg(args).table;
                const auto window = hp::get_int(h, "window");
                const auto bins = hp::get_int(h, "n_bins");
                if (bins > window / 2) throw Error(ErrorCode::TooManyBins, "n_bins must be <= window / 2");
                std::vector<std::string> names;
                for (long long k = 1; k <= bins; ++k) names.push_back("dft_" + std::to_string(k));
                std::vector<FeatureTable> parts;
                for (const auto& col : in.data.features)
                    parts.push_back(per_window(col, window, hp::get_int(h, "stride"), static_cast<std::size_t>(bins),
                                               names, [bins](std::span<const double> w) {
                                                   return features::dft_bin_magnitudes(w,
                                                                                       static_cast<std::size_t>(bins));
                                               }));
                return table_value(windowed_table(in, parts));
            });

    reg.add({"tods.feature_analysis.nmf",
             Family::FeatureAnalysis,
             DataKind::Table,
             {table_input()},
             {{"column", column_hp()},
              {"window", HyperparamSpec::integer(16, 2, {}, "window length (columns of the factorized matrix)")},
              {"stride", HyperparamSpec::integer(1, 1, {}, "step between window starts")},
              {"rank", HyperparamSpec::integer(2, 1, {}, "factorization rank")},
              {"max_iter", HyperparamSpec::integer(200, 1, {}, "maximum multiplicative-update iterations")},
              {"tol", HyperparamSpec::real(1e-6, 0.0, {}, "relative objective improvement stopping threshold")},
              {"seed", HyperparamSpec::integer(0, 0, {}, "initialization seed")}},
             "Windowed NMF; emits per-window reconstruction error and coefficients.",
             true},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                const auto c = in.data.resolve_column(hp::get_string(h, "column"));
                auto seg = processing::segment_subsequences(in.data.features[c], hp::get_int(h, "window"),
                                                            hp::get_int(h, "stride"));
                const auto mask = ctx.table_mask(in);
                std::vector<bool> complete(seg.rows.rows()), fit_row(seg.rows.rows());
                double shift = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < seg.rows.rows(); ++i) {
                    auto w = seg.rows.row(i);
                    complete[i] = std::none_of(w.begin(), w.end(), [](double v) { return std::isnan(v); });
                    fit_row[i] = complete[i] && (mask.empty() || mask[seg.starts[i]]);
                    if (fit_row[i])
                        for (double v : w) shift = std::min(shift, v);
                }
                std::vector<std::size_t> fit_idx, all_idx;
                for (std::size_t i = 0; i < complete.size(); ++i) {
                    if (complete[i]) all_idx.push_back(i);
                    if (fit_row[i]) fit_idx.push_back(i);
                }
                if (fit_idx.empty()) throw Error(ErrorCode::SeriesTooShort, "no complete windows to fit NMF");
                auto shifted = [&](const std::vector<std::size_t>& idx) {
                    Matrix v(idx.size(), seg.rows.cols());
                    for (std::size_t i = 0; i < idx.size(); ++i)
                        for (std::size_t k = 0; k < v.cols(); ++k)
                            v(i, k) = std::max(0.0, seg.rows(idx[i], k) - shift);
                    return v;
                };
                features::NmfOptions opt{static_cast<std::size_t>(hp::get_int(h, "rank")),
                                         static_cast<std::size_t>(hp::get_int(h, "max_iter")),
                                         hp::get_float(h, "tol"), static_cast<std::uint64_t>(hp::get_int(h, "seed"))};
                const auto fit = features::nmf_fit(shifted(fit_idx), opt);
                const Matrix v_all = shifted(all_idx);
                const Matrix w_all = features::nmf_project(v_all, fit.H, opt);
                const auto residual = features::nmf_residual_features(v_all, w_all, fit.H);

                FeatureTable t;
                t.values = Matrix(seg.rows.rows(), 1 + opt.rank, kNaN);
                for (std::size_t i = 0; i < all_idx.size(); ++i) {
                    t.values(all_idx[i], 0) = residual[i];
                    for (std::size_t k = 0; k < opt.rank; ++k) t.values(all_idx[i], 1 + k) = w_all(i, k);
                }
                t.row_index = seg.starts;
                t.column_names = {"nmf_residual"};
                for (std::size_t k = 1; k <= opt.rank; ++k) t.column_names.push_back("nmf_w" + std::to_string(k));
                TableValue single = in;
                single.data.feature_names = {in.data.feature_names[c]};
                single.data.features = {in.data.features[c]};
                return table_value(windowed_table(single, {t}));
            });
}

inline void add_detection(Registry& reg) {
    reg.add({"tods.detection.zscore",
             Family::DetectionAlgorithm,
             DataKind::Scores,
             {table_input()},
             {{"column", column_hp()}},
             "Absolute z-score of a column against training mean and std.",
             true},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                const auto c = in.data.resolve_column(hp::get_string(h, "column"));
                return aligned_scores(in.row_index, detection::zscore_detector(in.data.features[c], ctx.table_mask(in)),
                                      ctx.input.size());
            });

    reg.add({"tods.detection.iforest",
             Family::DetectionAlgorithm,
             DataKind::Scores,
             {table_input()},
             {{"n_trees", HyperparamSpec::integer(100, 1, 10000, "number of isolation trees")},
              {"subsample_size", HyperparamSpec::integer(256, 2, {}, "rows sampled per tree")},
              {"seed", HyperparamSpec::integer(0, 0, {}, "random seed")}},
             "Isolation forest over all feature columns.",
             true},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                const auto table = as_features(in);
                detection::IForestOptions opt{static_cast<std::size_t>(hp::get_int(h, "n_trees")),
                                              static_cast<std::size_t>(hp::get_int(h, "subsample_size")),
                                              static_cast<std::uint64_t>(hp::get_int(h, "seed"))};
                const auto forest = detection::IsolationForest::fit(table, opt, ctx.table_mask(in));
                return aligned_scores(in.row_index, forest.score(table), ctx.input.size());
            });

    reg.add({"tods.detection.knn",
             Family::DetectionAlgorithm,
             DataKind::Scores,
             {table_input()},
             {{"k", HyperparamSpec::integer(5, 1, {}, "neighbour rank")}},
             "Distance to the k-th nearest training row.",
             true},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                return aligned_scores(in.row_index,
                                      detection::knn_detector(as_features(in), hp::get_int(h, "k"), ctx.table_mask(in)),
                                      ctx.input.size());
            });

    reg.add({"tods.detection.ar_residual",
             Family::DetectionAlgorithm,
             DataKind::Scores,
             {table_input()},
             {{"column", column_hp()},
              {"order", HyperparamSpec::integer(2, 1, 100, "autoregressive order p")},
              {"train_fraction", HyperparamSpec::real(1.0, 0.0, 1.0, "leading fraction used for fitting", true)}},
             "Absolute one-step prediction error of a least-squares AR(p) model.",
             true},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                const auto c = in.data.resolve_column(hp::get_string(h, "column"));
                return aligned_scores(in.row_index,
                                      detection::ar_residual_detector(in.data.features[c], hp::get_int(h, "order"),
                                                                      hp::get_float(h, "train_fraction"),
                                                                      ctx.table_mask(in)),
                                      ctx.input.size());
            });

    reg.add({"tods.detection.matrix_profile",
             Family::DetectionAlgorithm,
             DataKind::Scores,
             {table_input()},
             {{"column", column_hp()}, {"window", HyperparamSpec::integer(16, 2, {}, "subsequence length")}},
             "Matrix-profile discord score per subsequence start.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                const auto& in = input_arg(args).table;
                const auto c = in.data.resolve_column(hp::get_string(h, "column"));
                return aligned_scores(in.row_index,
                                      detection::matrix_profile_discord(in.data.features[c], hp::get_int(h, "window")),
                                      ctx.input.size());
            });

    reg.add({"tods.detection.threshold",
             Family::DetectionAlgorithm,
             DataKind::Labels,
             {{"inputs", DataKind::Scores, true}},
             {{"contamination", HyperparamSpec::real(0.01, 0.0, 1.0, "fraction of scored points labelled outliers")}},
             "Labels the top contamination fraction of scores as outliers.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext&) {
                StepValue v;
                v.kind = DataKind::Labels;
                v.labels = detection::threshold_labels(input_arg(args).scores, hp::get_float(h, "contamination"));
                return v;
            });
}

/// Dataset seen by rules: the pipeline input, or a table realigned to input
/// positions (rows without a source become NaN).
inline TimeSeriesDataset rule_view(const StepArguments& args, const StepContext& ctx) {
    auto it = args.find("dataset");
    if (it == args.end() || it->second == nullptr) return ctx.input;
    const auto& t = it->second->table;
    TimeSeriesDataset ds;
    ds.timestamps = ctx.input.timestamps;
    ds.feature_names = t.data.feature_names;
    ds.features.assign(t.data.num_features(), std::vector<double>(ctx.input.size(), kNaN));
    for (std::size_t r = 0; r < t.row_index.size(); ++r)
        for (std::size_t c = 0; c < t.data.num_features(); ++c) ds.features[c][t.row_index[r]] = t.data.features[c][r];
    return ds;
}

inline void add_reinforcement(Registry& reg) {
    reg.add({"tods.reinforcement.rule_based_filter",
             Family::Reinforcement,
             DataKind::Labels,
             {{"inputs", DataKind::Labels, true}, {"dataset", DataKind::Table, false}},
             {{"rules", HyperparamSpec::rules("ordered rules; later rules win conflicts")}},
             "Overwrites predicted labels where human-authored rules match.",
             false},
            [](const HyperparamMap& h, const StepArguments& args, const StepContext& ctx) {
                StepValue v;
                v.kind = DataKind::Labels;
                v.labels = detection::rule_based_filter(input_arg(args).labels, rule_view(args, ctx),
                                                        hp::get_rules(h, "rules"));
                return v;
            });
}

} // namespace primitives

/// The process-wide primitive registry, built on first use and read-only after.
inline const Registry& registry() {
    static const Registry reg = [] {
        Registry r;
        primitives::add_processing(r);
        primitives::add_features(r);
        primitives::add_detection(r);
        primitives::add_reinforcement(r);
        return r;
    }();
    return reg;
}

inline std::vector<PrimitiveDescriptor> registry_list() { return registry().list(); }

} // namespace tsods
