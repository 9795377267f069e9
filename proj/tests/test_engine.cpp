// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tsods/engine.hpp"
#include "tsods/random.hpp"
#include "tsods/synthetic.hpp"

using namespace tsods;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no tsods::Error thrown";
    return ErrorCode::EmptyInput;
}

std::vector<std::string> codes(const std::vector<Diagnostic>& diags) {
    std::vector<std::string> out;
    for (const auto& d : diags) out.push_back(d.code);
    return out;
}

PipelineDescription zscore_pipeline(double contamination) {
    return chain_pipeline({{"tods.timeseries_processing.standardize", {}},
                           {"tods.detection.zscore", {}},
                           {"tods.detection.threshold", {{"contamination", contamination}}}});
}

TimeSeriesDataset small_series(std::size_t n, std::uint64_t seed) {
    TimeSeriesDataset ds;
    ds.name = "small";
    ds.feature_names = {"value"};
    ds.features = {oracle::gaussian_series(n, seed)};
    ds.labels = std::vector<std::uint8_t>(n, 0);
    for (std::size_t i = 0; i < n; ++i) ds.timestamps.push_back(static_cast<std::int64_t>(i));
    return ds;
}

} // namespace

TEST(Validate, KindMismatchOnTableIntoThreshold) {
    const auto p = chain_pipeline({{"tods.detection.threshold", {}}});
    const auto c = codes(validate(p));
    EXPECT_NE(std::find(c.begin(), c.end(), "KindMismatch"), c.end());
}

TEST(Validate, OrphanStepAndUnreachableOutput) {
    auto p = zscore_pipeline(0.1);
    p.steps[0].arguments.clear();
    const auto diags = validate(p);
    ASSERT_FALSE(diags.empty());
    EXPECT_EQ(diags.front().code, "OrphanStep");
    EXPECT_EQ(diags.front().step, 0u);
    const auto c = codes(diags);
    EXPECT_NE(std::find(c.begin(), c.end(), "UnreachableOutput"), c.end());
}

TEST(Validate, UnknownArgumentAndTableOutput) {
    auto p = zscore_pipeline(0.1);
    p.steps[1].arguments.emplace("extra", DataReference::input());
    EXPECT_EQ(codes(validate(p)), (std::vector<std::string>{"UnknownArgument"}));
    auto q = chain_pipeline({{"tods.timeseries_processing.standardize", {}}});
    EXPECT_EQ(codes(validate(q)), (std::vector<std::string>{"BadOutput"}));
}

TEST(Validate, DiagnosticJson) {
    const auto j = to_json(Diagnostic{2, "ForwardReference", "m"});
    EXPECT_EQ(j.at("step"), 2);
    EXPECT_EQ(j.at("code"), "ForwardReference");
    EXPECT_TRUE(to_json(Diagnostic{std::nullopt, "BadOutput", "m"}).at("step").is_null());
}

TEST(Execute, DefaultStyleChainFindsSpikes) {
    const auto ds = make_spike_benchmark({.length = 400, .spikes = 4});
    const auto p = zscore_pipeline(0.01);
    const auto r = execute(p, ds);
    ASSERT_EQ(r.kind, DataKind::Labels);
    ASSERT_EQ(r.labels.size(), ds.size());
    EXPECT_EQ(r.labels, *ds.labels);
    EXPECT_EQ(r.trace.steps.size(), 3u);
    EXPECT_EQ(r.final_scores.size(), ds.size());
    for (const auto& s : r.trace.steps) EXPECT_TRUE(s.ok);
}

TEST(Execute, TraceJsonShape) {
    const auto ds = small_series(50, 1);
    const auto j = to_json(execute(zscore_pipeline(0.1), ds).trace);
    ASSERT_EQ(j.at("steps").size(), 3u);
    EXPECT_EQ(j.at("steps")[2].at("primitive_id"), "tods.detection.threshold");
    EXPECT_EQ(j.at("steps")[2].at("status"), "ok");
}

TEST(Execute, StepFailureCarriesIndexCauseAndTrace) {
    auto ds = small_series(20, 2);
    std::fill(ds.features[0].begin(), ds.features[0].end(), std::nan(""));
    const auto p = chain_pipeline({{"tods.data_processing.timestamp_validation", {}},
                                   {"tods.data_processing.impute_missing", {}},
                                   {"tods.detection.zscore", {}},
                                   {"tods.detection.threshold", {}}});
    try {
        execute(p, ds);
        FAIL();
    } catch (const StepFailed& e) {
        EXPECT_EQ(e.step(), 1u);
        EXPECT_EQ(e.cause(), ErrorCode::AllMissingColumn);
        ASSERT_EQ(e.trace().steps.size(), 2u);
        EXPECT_TRUE(e.trace().steps[0].ok);
        EXPECT_FALSE(e.trace().steps[1].ok);
    }
}

TEST(Execute, RejectsInvalidPipelineAndBadMask) {
    const auto ds = small_series(20, 3);
    EXPECT_EQ(code_of([&] { execute(chain_pipeline({{"tods.detection.threshold", {}}}), ds); }),
              ErrorCode::InvalidPipeline);
    const std::vector<bool> mask(5, true);
    EXPECT_EQ(code_of([&] { execute(zscore_pipeline(0.1), ds, {&mask}); }), ErrorCode::LengthMismatch);
}

TEST(Execute, Deterministic) {
    const auto ds = make_spike_benchmark({.length = 300, .spikes = 3});
    const auto p = chain_pipeline({{"tods.feature_analysis.window_statistics", {{"window", std::int64_t{4}}}},
                                   {"tods.detection.iforest", {{"n_trees", std::int64_t{30}}}},
                                   {"tods.detection.threshold", {}}});
    const auto a = execute(p, ds), b = execute(p, ds);
    EXPECT_EQ(a.labels, b.labels);
    ASSERT_EQ(a.final_scores.size(), b.final_scores.size());
    for (std::size_t i = 0; i < a.final_scores.size(); ++i) {
        if (std::isnan(a.final_scores[i])) {
            EXPECT_TRUE(std::isnan(b.final_scores[i])) << i;
        } else {
            EXPECT_EQ(a.final_scores[i], b.final_scores[i]) << i;
        }
    }
}

TEST(Execute, TrainRowScoresIgnoreTestRows) {
    auto ds = small_series(100, 4);
    std::vector<bool> mask(100, false);
    for (std::size_t i = 0; i < 60; ++i) mask[i] = true;
    const auto p = chain_pipeline({{"tods.timeseries_processing.standardize", {}}, {"tods.detection.zscore", {}}});
    const auto before = execute(p, ds, {&mask}).scores;
    for (std::size_t i = 60; i < 100; ++i) ds.features[0][i] += 1000.0;
    const auto after = execute(p, ds, {&mask}).scores;
    for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(before[i], after[i]) << i;
}

TEST(Splits, KFoldGolden) {
    const auto plan = make_splits(10, SplitScheme::kfold(3));
    ASSERT_EQ(plan.folds.size(), 3u);
    EXPECT_EQ(plan.folds[0].test, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(plan.folds[1].test, (std::vector<std::size_t>{3, 4, 5}));
    EXPECT_EQ(plan.folds[2].test, (std::vector<std::size_t>{6, 7, 8, 9}));
    EXPECT_EQ(plan.folds[1].train, (std::vector<std::size_t>{0, 1, 2, 6, 7, 8, 9}));
}

TEST(Splits, HoldoutGolden) {
    const auto plan = make_splits(10, SplitScheme::holdout(0.75));
    ASSERT_EQ(plan.folds.size(), 1u);
    EXPECT_EQ(plan.folds[0].train.size(), 8u);
    EXPECT_EQ(plan.folds[0].test, (std::vector<std::size_t>{8, 9}));
}

TEST(Splits, PartitionProperty) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.below(8);
        const std::size_t n = k + rng.below(500);
        const auto plan = make_splits(n, SplitScheme::kfold(k));
        std::vector<int> seen(n, 0);
        for (const auto& f : plan.folds) {
            EXPECT_EQ(f.train.size() + f.test.size(), n);
            EXPECT_FALSE(f.test.empty());
            for (auto i : f.test) ++seen[i];
            EXPECT_TRUE(std::is_sorted(f.test.begin(), f.test.end()));
        }
        for (int s : seen) EXPECT_EQ(s, 1);
    }
}

TEST(Splits, SchemeParsingAndErrors) {
    EXPECT_EQ(SplitScheme::parse("kfold").k, 5u);
    EXPECT_EQ(SplitScheme::parse("kfold:3").k, 3u);
    EXPECT_DOUBLE_EQ(SplitScheme::parse("holdout:0.6").train_fraction, 0.6);
    EXPECT_EQ(SplitScheme::parse("holdout:0.6").str(), "holdout:0.6");
    EXPECT_EQ(code_of([] { SplitScheme::parse("bootstrap"); }), ErrorCode::BadScheme);
    EXPECT_EQ(code_of([] { make_splits(3, SplitScheme::kfold(5)); }), ErrorCode::BadScheme);
    EXPECT_EQ(code_of([] { make_splits(10, SplitScheme::holdout(1.0)); }), ErrorCode::BadScheme);
}

TEST(Score, PlainGolden) {
    const std::vector<std::uint8_t> pred{1, 1, 1, 0, 0, 0}, truth{1, 1, 0, 1, 0, 0};
    const auto r = score(pred, truth);
    EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
    EXPECT_EQ(r.tn, 2u);
}

TEST(Score, PointAdjustedGolden) {
    const std::vector<std::uint8_t> truth{0, 1, 1, 1, 1, 0, 0, 1, 1, 0};
    const std::vector<std::uint8_t> pred{0, 0, 0, 1, 0, 0, 1, 0, 0, 0};
    const auto r = score(pred, truth, Metric::F1PointAdjusted);
    EXPECT_DOUBLE_EQ(r.recall, 1.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.recall_pa, 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.precision_pa, 0.8);
    EXPECT_DOUBLE_EQ(r.primary_value(), r.f1_pa);
}

TEST(Score, MatchesOracleAndPlainNeverExceedsAdjusted) {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<std::uint8_t> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = rng.uniform() < 0.1;
            truth[i] = (i > 0 && truth[i - 1]) ? rng.uniform() < 0.7 : rng.uniform() < 0.05;
        }
        const auto r = score(pred, truth);
        EXPECT_NEAR(r.f1, oracle::f1(oracle::counts(pred, truth)), 1e-12);
        EXPECT_NEAR(r.f1_pa, oracle::f1(oracle::adjusted_counts(pred, truth)), 1e-12);
        EXPECT_LE(r.recall, r.recall_pa + 1e-12);
        EXPECT_LE(r.f1, r.f1_pa + 1e-12);
    }
}

TEST(Score, Errors) {
    const std::vector<std::uint8_t> a{1, 0}, b{1};
    EXPECT_EQ(code_of([&] { score(a, b); }), ErrorCode::LengthMismatch);
    EXPECT_EQ(code_of([&] { score(a, std::span<const std::uint8_t>{}); }), ErrorCode::MissingGroundTruth);
    EXPECT_EQ(code_of([] { parse_metric("auc"); }), ErrorCode::BadMetric);
    EXPECT_EQ(parse_metric("f1_pa"), Metric::F1PointAdjusted);
}

TEST(Evaluate, AggregateIsFoldMeanOfIndependentRecount) {
    const auto ds = make_spike_benchmark({.length = 600, .spikes = 6});
    const auto p = zscore_pipeline(0.02);
    const auto ev = evaluate_pipeline(ds, p, Metric::F1, SplitScheme::kfold(2));
    ASSERT_EQ(ev.folds.size(), 2u);
    double sum = 0.0;
    for (const auto& fold : ev.plan.folds) {
        std::vector<bool> mask(ds.size(), false);
        for (auto i : fold.train) mask[i] = true;
        const auto labels = execute(p, ds, {&mask}).labels;
        std::vector<std::uint8_t> pred, truth;
        for (auto i : fold.test) {
            pred.push_back(labels[i]);
            truth.push_back((*ds.labels)[i]);
        }
        sum += oracle::f1(oracle::counts(pred, truth));
    }
    EXPECT_NEAR(ev.aggregate, sum / 2.0, 1e-12);
}

TEST(Evaluate, JsonShape) {
    const auto ds = make_spike_benchmark({.length = 300, .spikes = 3});
    const auto j = to_json(evaluate_pipeline(ds, zscore_pipeline(0.01), Metric::F1PointAdjusted));
    EXPECT_EQ(j.at("primary_metric"), "f1_pa");
    EXPECT_EQ(j.at("folds").size(), 5u);
    EXPECT_TRUE(j.at("scores").contains("f1_pa"));
    EXPECT_TRUE(j.at("counts").contains("tp"));
}

TEST(Evaluate, Errors) {
    auto ds = small_series(50, 7);
    EXPECT_EQ(code_of([&] {
                  evaluate_pipeline(ds, chain_pipeline({{"tods.detection.zscore", {}}}));
              }),
              ErrorCode::BadOutput);
    ds.labels.reset();
    EXPECT_EQ(code_of([&] { evaluate_pipeline(ds, zscore_pipeline(0.1)); }), ErrorCode::MissingGroundTruth);
}
