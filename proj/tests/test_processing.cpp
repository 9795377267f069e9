// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tsods/engine.hpp"
#include "tsods/processing.hpp"
#include "tsods/random.hpp"

using namespace tsods;
using namespace tsods::processing;

namespace {

TimeSeriesDataset make_ds(std::vector<std::int64_t> ts, std::vector<double> x) {
    TimeSeriesDataset ds;
    ds.timestamps = std::move(ts);
    ds.feature_names = {"value"};
    ds.features = {std::move(x)};
    return ds;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::EmptyInput;
}

void expect_vec_near(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

} // namespace

TEST(TimestampValidation, AlreadyValidUnchanged) {
    const auto ds = make_ds({1, 2, 3}, {10, 20, 30});
    EXPECT_TRUE(timestamp_validation(ds) == ds);
}

TEST(TimestampValidation, SortPermutesFeaturesTogether) {
    const auto out = timestamp_validation(make_ds({3, 1, 2}, {30, 10, 20}));
    EXPECT_EQ(out.timestamps, (std::vector<std::int64_t>{1, 2, 3}));
    EXPECT_EQ(out.features[0], (std::vector<double>{10, 20, 30}));
}

TEST(TimestampValidation, Policies) {
    EXPECT_EQ(code_of([] { timestamp_validation(make_ds({1, 1, 2}, {0, 0, 0}), SortPolicy::Sort, DuplicatePolicy::Error); }),
              ErrorCode::DuplicateTimestamp);
    EXPECT_EQ(code_of([] { timestamp_validation(make_ds({2, 1}, {0, 0}), SortPolicy::Error); }),
              ErrorCode::UnsortedTimestamps);
    const auto kept = timestamp_validation(make_ds({1, 1, 2}, {5, 6, 7}));
    EXPECT_EQ(kept.features[0], (std::vector<double>{5, 7}));
}

TEST(TimestampValidation, IdempotentOnRandomInput) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<std::int64_t> ts(n);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            ts[i] = static_cast<std::int64_t>(rng.below(30));
            x[i] = rng.normal();
        }
        const auto once = timestamp_validation(make_ds(ts, x));
        EXPECT_TRUE(timestamp_validation(once) == once);
        for (std::size_t i = 1; i < once.size(); ++i) EXPECT_LT(once.timestamps[i - 1], once.timestamps[i]);
    }
}

TEST(Impute, GoldenValues) {
    EXPECT_EQ(impute_column(std::vector<double>{1, kNaN, 3}, ImputeStrategy::Linear), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(impute_column(std::vector<double>{kNaN, 2, 3}, ImputeStrategy::ForwardFill), (std::vector<double>{2, 2, 3}));
    EXPECT_EQ(impute_column(std::vector<double>{1, kNaN, 3}, ImputeStrategy::Mean), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(impute_column(std::vector<double>{kNaN, 4, kNaN, kNaN, 10, kNaN}, ImputeStrategy::Linear),
              (std::vector<double>{4, 4, 6, 8, 10, 10}));
}

TEST(Impute, AllMissing) {
    EXPECT_EQ(code_of([] { impute_column(std::vector<double>{kNaN, kNaN}, ImputeStrategy::Mean); }),
              ErrorCode::AllMissingColumn);
}

TEST(Impute, NoNanRemains) {
    Rng rng(5);
    for (auto strategy : {ImputeStrategy::Mean, ImputeStrategy::ForwardFill, ImputeStrategy::Linear}) {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> x(1 + rng.below(50));
            for (auto& v : x) v = rng.uniform() < 0.3 ? kNaN : rng.normal();
            x[rng.below(x.size())] = 1.0;
            for (double v : impute_column(x, strategy)) EXPECT_FALSE(std::isnan(v));
        }
    }
}

TEST(SeasonalDecomposition, RampHasNoSeasonality) {
    std::vector<double> x(40);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = static_cast<double>(t);
    const auto d = seasonal_decomposition(x, 4);
    for (double s : d.seasonal) EXPECT_LT(std::abs(s), 1e-9);
    for (double r : d.residual)
        if (!std::isnan(r)) {
            EXPECT_LT(std::abs(r), 1e-9);
        }
}

TEST(SeasonalDecomposition, ConstantSeries) {
    for (long long p : {2, 3, 7}) {
        const std::vector<double> x(30, 4.25);
        const auto d = seasonal_decomposition(x, p);
        for (std::size_t t = 0; t < x.size(); ++t) {
            EXPECT_NEAR(d.seasonal[t], 0.0, 1e-12);
            if (!std::isnan(d.trend[t])) {
                EXPECT_NEAR(d.trend[t], 4.25, 1e-12);
                EXPECT_NEAR(d.residual[t], 0.0, 1e-12);
            }
        }
    }
}

TEST(SeasonalDecomposition, EdgesUndefinedAndSeasonalSumsToZero) {
    const auto x = oracle::gaussian_series(48, 2);
    const auto d = seasonal_decomposition(x, 6);
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_TRUE(std::isnan(d.trend[t]));
        EXPECT_TRUE(std::isnan(d.residual[t]));
        EXPECT_TRUE(std::isnan(d.trend[47 - t]));
    }
    EXPECT_FALSE(std::isnan(d.trend[3]));
    double sum = 0.0;
    for (std::size_t k = 0; k < 6; ++k) sum += d.seasonal[k];
    EXPECT_NEAR(sum, 0.0, 1e-12);
}

TEST(SeasonalDecomposition, InteriorIdentityRandom) {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const long long p = 2 + static_cast<long long>(rng.below(11));
        const std::size_t n = static_cast<std::size_t>(2 * p) + rng.below(100);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.normal(0.0, 3.0);
        const auto d = seasonal_decomposition(x, p);
        for (std::size_t t = 0; t < n; ++t)
            if (!std::isnan(d.residual[t])) {
                EXPECT_NEAR(d.trend[t] + d.seasonal[t] + d.residual[t], x[t], 1e-9);
            }
    }
}

TEST(SeasonalDecomposition, Errors) {
    const std::vector<double> x(10, 1.0);
    EXPECT_EQ(code_of([&] { seasonal_decomposition(x, 6); }), ErrorCode::PeriodTooLarge);
    EXPECT_EQ(code_of([&] { seasonal_decomposition(x, 1); }), ErrorCode::NonPositivePeriod);
    EXPECT_EQ(code_of([&] { seasonal_decomposition(x, 0); }), ErrorCode::NonPositivePeriod);
}

TEST(MovingAverage, GoldenAndIdentity) {
    expect_vec_near(moving_average(std::vector<double>{1, 2, 3, 4, 5}, 3), {1.5, 2, 3, 4, 4.5}, 1e-15);
    const auto x = oracle::gaussian_series(20, 4);
    EXPECT_EQ(moving_average(x, 1), x);
    for (double v : moving_average(std::vector<double>(9, 3.5), 5)) EXPECT_DOUBLE_EQ(v, 3.5);
    EXPECT_EQ(code_of([] { moving_average(std::vector<double>{1}, 0); }), ErrorCode::NonPositiveWindow);
}

TEST(Difference, GoldenValues) {
    EXPECT_EQ(difference(std::vector<double>{1, 3, 6}, 1), (std::vector<double>{2, 3}));
    EXPECT_EQ(difference(std::vector<double>{0, 1, 4, 9, 16}, 2), (std::vector<double>{2, 2, 2}));
    std::vector<double> ramp(10);
    for (std::size_t t = 0; t < ramp.size(); ++t) ramp[t] = 1.5 * static_cast<double>(t) + 2.0;
    for (double v : difference(ramp, 1)) EXPECT_DOUBLE_EQ(v, 1.5);
    EXPECT_EQ(code_of([] { difference(std::vector<double>{1, 2}, 2); }), ErrorCode::OrderTooLarge);
}

TEST(Difference, InvertsCumulativeSum) {
    Rng rng(8);
    std::vector<double> x(50);
    for (auto& v : x) v = static_cast<double>(static_cast<long long>(rng.below(1000)) - 500);
    std::vector<double> cum(x.size());
    double run = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) cum[i] = run += x[i];
    EXPECT_EQ(difference(cum, 1), std::vector<double>(x.begin() + 1, x.end()));
}

TEST(Standardize, GoldenValues) {
    const auto ds = make_ds({0, 1}, {0, 10});
    const auto state = standardize_fit(ds);
    EXPECT_DOUBLE_EQ(state.means[0], 5.0);
    EXPECT_DOUBLE_EQ(state.stds[0], 5.0);
    EXPECT_EQ(standardize_produce(state, ds).features[0], (std::vector<double>{-1, 1}));
    EXPECT_EQ(standardize_produce(state, make_ds({7}, {5})).features[0], (std::vector<double>{0}));
    const auto constant = make_ds({0, 1, 2}, {3, 3, 3});
    EXPECT_EQ(standardize_produce(standardize_fit(constant), constant).features[0], (std::vector<double>{0, 0, 0}));
}

TEST(Standardize, UnitMomentsOnFitData) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(200);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.normal(rng.uniform(-50, 50), rng.uniform(0.1, 10));
        std::vector<std::int64_t> ts(n);
        const auto ds = make_ds(ts, x);
        const auto out = standardize_produce(standardize_fit(ds), ds);
        const auto m = oracle::two_pass(out.features[0]);
        EXPECT_NEAR(m.mean, 0.0, 1e-9);
        EXPECT_NEAR(m.std, 1.0, 1e-9);
    }
}

TEST(Standardize, FitUsesOnlyMaskedRows) {
    auto ds = make_ds({0, 1, 2, 3}, {1, 3, 100, -100});
    const std::vector<bool> mask{true, true, false, false};
    const auto before = standardize_fit(ds, mask);
    ds.features[0][2] = 12345;
    ds.features[0][3] = -9;
    EXPECT_EQ(standardize_fit(ds, mask), before);
}

TEST(Segments, GoldenValues) {
    auto seg = segment_subsequences(std::vector<double>{1, 2, 3, 4}, 2, 1);
    ASSERT_EQ(seg.rows.rows(), 3u);
    EXPECT_EQ(std::vector<double>(seg.rows.row(2).begin(), seg.rows.row(2).end()), (std::vector<double>{3, 4}));
    EXPECT_EQ(seg.starts, (std::vector<std::size_t>{0, 1, 2}));

    seg = segment_subsequences(std::vector<double>{1, 2, 3, 4, 5}, 2, 2);
    ASSERT_EQ(seg.rows.rows(), 2u);
    EXPECT_EQ(seg.rows(1, 0), 3.0);
    EXPECT_EQ(seg.rows(1, 1), 4.0);

    const std::vector<double> x{9, 8, 7};
    seg = segment_subsequences(x, 3, 1);
    ASSERT_EQ(seg.rows.rows(), 1u);
    EXPECT_EQ(std::vector<double>(seg.rows.row(0).begin(), seg.rows.row(0).end()), x);
    EXPECT_EQ(code_of([&] { segment_subsequences(x, 4, 1); }), ErrorCode::WindowTooLarge);
}

TEST(Segments, LengthDeterministic) {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(100);
        const std::size_t w = 1 + rng.below(n);
        const std::size_t s = 1 + rng.below(10);
        const auto seg = segment_subsequences(std::vector<double>(n, 0.0), static_cast<long long>(w), static_cast<long long>(s));
        EXPECT_EQ(seg.rows.rows(), (n - w) / s + 1);
    }
}

// Registered processing primitives keep their documented output lengths.
TEST(ProcessingPrimitives, OutputLengths) {
    TimeSeriesDataset ds = make_ds({}, oracle::gaussian_series(60, 3));
    for (std::size_t i = 0; i < 60; ++i) ds.timestamps.push_back(static_cast<std::int64_t>(i));
    ds.labels = std::vector<std::uint8_t>(60, 0);
    auto run = [&](const std::string& id, HyperparamMap h) {
        auto p = chain_pipeline({{id, std::move(h)}, {"tods.detection.zscore", {}}, {"tods.detection.threshold", {}}});
        return execute(p, ds).trace.steps[0].output_shape;
    };
    EXPECT_EQ(run("tods.timeseries_processing.difference", {{"order", std::int64_t{3}}}), std::make_pair(std::size_t{57}, std::size_t{1}));
    EXPECT_EQ(run("tods.timeseries_processing.moving_average", {}), std::make_pair(std::size_t{60}, std::size_t{1}));
    EXPECT_EQ(run("tods.timeseries_processing.seasonal_decomposition", {{"period", std::int64_t{5}}}),
              std::make_pair(std::size_t{60}, std::size_t{3}));
    EXPECT_EQ(run("tods.timeseries_processing.subsequence_segmentation", {{"window", std::int64_t{10}}, {"stride", std::int64_t{5}}}),
              std::make_pair(std::size_t{11}, std::size_t{10}));
}
