// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tsods/dataset.hpp"
#include "tsods/error.hpp"
#include "tsods/table.hpp"

/// Data-processing and time-series-processing primitives.
namespace tsods::processing {

inline constexpr double kVarianceEpsilon = 1e-12;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Timestamp validation

enum class SortPolicy { Sort, Error };
enum class DuplicatePolicy { KeepFirst, Error };

/// Row order after validation: original row indices, timestamps strictly
/// increasing. Unsorted input is stably sorted (policy Sort); among equal
/// timestamps the first occurrence in that order survives (KeepFirst).
inline std::vector<std::size_t> validated_row_order(const std::vector<std::int64_t>& timestamps, SortPolicy policy,
                                                    DuplicatePolicy duplicates) {
    std::vector<std::size_t> order(timestamps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        if (timestamps[i] < timestamps[i - 1]) {
            if (policy == SortPolicy::Error)
                throw Error(ErrorCode::UnsortedTimestamps, "timestamp at row " + std::to_string(i) +
                                                               " precedes the previous row");
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return timestamps[a] < timestamps[b]; });
            break;
        }
    }
    std::vector<std::size_t> kept;
    kept.reserve(order.size());
    for (auto row : order) {
        if (!kept.empty() && timestamps[kept.back()] == timestamps[row]) {
            if (duplicates == DuplicatePolicy::Error)
                throw Error(ErrorCode::DuplicateTimestamp,
                            "timestamp " + std::to_string(timestamps[row]) + " appears more than once");
            continue;
        }
        kept.push_back(row);
    }
    return kept;
}

inline TimeSeriesDataset timestamp_validation(const TimeSeriesDataset& ds, SortPolicy policy = SortPolicy::Sort,
                                              DuplicatePolicy duplicates = DuplicatePolicy::KeepFirst) {
    if (ds.size() == 0) throw Error(ErrorCode::EmptyInput, "dataset has no rows");
    return ds.select_rows(validated_row_order(ds.timestamps, policy, duplicates));
}

// ---------------------------------------------------------------------------
// Missing-value imputation

enum class ImputeStrategy { Mean, ForwardFill, Linear };

inline std::vector<double> impute_column(std::span<const double> x, ImputeStrategy strategy) {
    std::vector<double> y(x.begin(), x.end());
    std::vector<std::size_t> observed;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isnan(x[i])) observed.push_back(i);
    if (observed.empty()) throw Error(ErrorCode::AllMissingColumn, "column has no observed values");
    if (observed.size() == x.size()) return y;

    switch (strategy) {
    case ImputeStrategy::Mean: {
        double sum = 0.0;
        for (auto i : observed) sum += x[i];
        const double mean = sum / static_cast<double>(observed.size());
        for (auto& v : y)
            if (std::isnan(v)) v = mean;
        break;
    }
    case ImputeStrategy::ForwardFill: {
        double last = x[observed.front()];
        for (auto& v : y) {
            if (std::isnan(v)) v = last;
            else last = v;
        }
        break;
    }
    case ImputeStrategy::Linear: {
        for (std::size_t i = 0; i < observed.front(); ++i) y[i] = x[observed.front()];
        for (std::size_t i = observed.back() + 1; i < x.size(); ++i) y[i] = x[observed.back()];
        for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
            const std::size_t a = observed[k], b = observed[k + 1];
            const double span = static_cast<double>(b - a);
            for (std::size_t i = a + 1; i < b; ++i)
                y[i] = x[a] + (x[b] - x[a]) * static_cast<double>(i - a) / span;
        }
        break;
    }
    }
    return y;
}

inline TimeSeriesDataset impute_missing(const TimeSeriesDataset& ds, ImputeStrategy strategy) {
    TimeSeriesDataset out = ds;
    for (std::size_t c = 0; c < out.features.size(); ++c) {
        try {
            out.features[c] = impute_column(ds.features[c], strategy);
        } catch (const Error& e) {
            throw Error(e.code(), "column '" + ds.feature_names[c] + "' has no observed values");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Classical additive seasonal decomposition

struct Decomposition {
    std::vector<double> trend;
    std::vector<double> seasonal;
    std::vector<double> residual;
};

/// Centered moving average of width `period`; for even periods the two
/// straddling windows are averaged (a 2 x period filter). Edges are NaN.
inline std::vector<double> centered_trend(std::span<const double> x, std::size_t period) {
    const std::size_t n = x.size();
    std::vector<double> trend(n, kNaN);
    const std::size_t half = period / 2;
    if (n < 2 * half + 1) return trend;
    for (std::size_t t = half; t + half < n; ++t) {
        double sum = 0.0;
        if (period % 2 == 1) {
            for (std::size_t k = t - half; k <= t + half; ++k) sum += x[k];
            trend[t] = sum / static_cast<double>(period);
        } else {
            sum = 0.5 * x[t - half] + 0.5 * x[t + half];
            for (std::size_t k = t - half + 1; k < t + half; ++k) sum += x[k];
            trend[t] = sum / static_cast<double>(period);
        }
    }
    return trend;
}

inline Decomposition seasonal_decomposition(std::span<const double> x, long long period) {
    if (period < 2) throw Error(ErrorCode::NonPositivePeriod, "period must be at least 2, got " + std::to_string(period));
    const std::size_t p = static_cast<std::size_t>(period);
    const std::size_t n = x.size();
    if (n < 2 * p)
        throw Error(ErrorCode::PeriodTooLarge,
                    "series of length " + std::to_string(n) + " is shorter than two periods of " + std::to_string(p));

    Decomposition d;
    d.trend = centered_trend(x, p);

    std::vector<double> phase_sum(p, 0.0);
    std::vector<std::size_t> phase_count(p, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (std::isnan(d.trend[t]) || std::isnan(x[t])) continue;
        phase_sum[t % p] += x[t] - d.trend[t];
        ++phase_count[t % p];
    }
    std::vector<double> phase_mean(p, 0.0);
    for (std::size_t k = 0; k < p; ++k)
        phase_mean[k] = phase_count[k] ? phase_sum[k] / static_cast<double>(phase_count[k]) : 0.0;
    const double center = std::accumulate(phase_mean.begin(), phase_mean.end(), 0.0) / static_cast<double>(p);
    for (auto& m : phase_mean) m -= center;

    d.seasonal.resize(n);
    d.residual.assign(n, kNaN);
    for (std::size_t t = 0; t < n; ++t) {
        d.seasonal[t] = phase_mean[t % p];
        if (!std::isnan(d.trend[t])) d.residual[t] = x[t] - d.trend[t] - d.seasonal[t];
    }
    return d;
}

// ---------------------------------------------------------------------------
// Moving average and differencing

/// y[t] = mean of x over [t - w/2, t + w/2] clipped to the series; NaN cells
/// are skipped.
inline std::vector<double> moving_average(std::span<const double> x, long long window) {
    if (window < 1) throw Error(ErrorCode::NonPositiveWindow, "window must be >= 1, got " + std::to_string(window));
    const std::size_t n = x.size();
    const std::size_t half = static_cast<std::size_t>(window) / 2;
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= half ? t - half : 0;
        const std::size_t hi = std::min(n - 1, t + half);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t k = lo; k <= hi; ++k) {
            if (std::isnan(x[k])) continue;
            sum += x[k];
            ++count;
        }
        y[t] = count ? sum / static_cast<double>(count) : kNaN;
    }
    return y;
}

inline std::vector<double> difference(std::span<const double> x, long long order) {
    if (order < 1) throw Error(ErrorCode::OrderTooLarge, "order must be >= 1, got " + std::to_string(order));
    if (x.size() <= static_cast<std::size_t>(order))
        throw Error(ErrorCode::OrderTooLarge, "order " + std::to_string(order) + " needs more than " +
                                                  std::to_string(x.size()) + " points");
    std::vector<double> y(x.begin(), x.end());
    for (long long k = 0; k < order; ++k) {
        for (std::size_t t = 0; t + 1 < y.size(); ++t) y[t] = y[t + 1] - y[t];
        y.pop_back();
    }
    return y;
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-column mean and population standard deviation learned at fit time.
struct StandardizeState {
    std::vector<double> means;
    std::vector<double> stds;
    std::size_t fit_length = 0;

    bool operator==(const StandardizeState&) const = default;
};

/// Fits on the rows where `use_row` is true (all rows when empty). NaN cells
/// are ignored.
inline StandardizeState standardize_fit(const TimeSeriesDataset& ds, const std::vector<bool>& use_row = {}) {
    StandardizeState s;
    for (const auto& col : ds.features) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t r = 0; r < col.size(); ++r) {
            if ((!use_row.empty() && !use_row[r]) || std::isnan(col[r])) continue;
            sum += col[r];
            ++count;
        }
        const double mean = count ? sum / static_cast<double>(count) : 0.0;
        double sq = 0.0;
        for (std::size_t r = 0; r < col.size(); ++r) {
            if ((!use_row.empty() && !use_row[r]) || std::isnan(col[r])) continue;
            sq += (col[r] - mean) * (col[r] - mean);
        }
        s.means.push_back(mean);
        s.stds.push_back(count ? std::sqrt(sq / static_cast<double>(count)) : 0.0);
        s.fit_length = std::max(s.fit_length, count);
    }
    return s;
}

inline TimeSeriesDataset standardize_produce(const StandardizeState& state, const TimeSeriesDataset& ds) {
    if (state.means.size() != ds.num_features())
        throw Error(ErrorCode::LengthMismatch, "standardize state fitted on " + std::to_string(state.means.size()) +
                                                   " columns, got " + std::to_string(ds.num_features()));
    TimeSeriesDataset out = ds;
    for (std::size_t c = 0; c < out.features.size(); ++c) {
        const double scale = std::max(state.stds[c], kVarianceEpsilon);
        for (auto& v : out.features[c]) v = (v - state.means[c]) / scale;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subsequence segmentation

struct Segments {
    Matrix rows;                     ///< one subsequence per row
    std::vector<std::size_t> starts; ///< original start index of each row
};

inline std::size_t segment_count(std::size_t n, std::size_t window, std::size_t stride) {
    return (n - window) / stride + 1;
}

inline Segments segment_subsequences(std::span<const double> x, long long window, long long stride) {
    if (window < 1) throw Error(ErrorCode::NonPositiveWindow, "window must be >= 1");
    if (stride < 1) throw Error(ErrorCode::NonPositiveWindow, "stride must be >= 1");
    const auto w = static_cast<std::size_t>(window);
    const auto s = static_cast<std::size_t>(stride);
    if (x.size() < w)
        throw Error(ErrorCode::WindowTooLarge,
                    "window " + std::to_string(w) + " exceeds series length " + std::to_string(x.size()));
    const std::size_t count = segment_count(x.size(), w, s);
    Segments seg{Matrix(count, w), std::vector<std::size_t>(count)};
    for (std::size_t i = 0; i < count; ++i) {
        seg.starts[i] = i * s;
        for (std::size_t k = 0; k < w; ++k) seg.rows(i, k) = x[i * s + k];
    }
    return seg;
}

} // namespace tsods::processing
