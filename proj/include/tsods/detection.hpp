// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tsods/dataset.hpp"
#include "tsods/error.hpp"
#include "tsods/processing.hpp"
#include "tsods/random.hpp"
#include "tsods/table.hpp"

/// Detection algorithms and the rule-based reinforcement filter. All scores
/// are oriented so that higher means more anomalous; NaN marks indices a
/// detector cannot score (missing input, edge effects).
namespace tsods::detection {

using processing::kNaN;
using processing::kVarianceEpsilon;

namespace detail {
inline bool selected(const std::vector<bool>& mask, std::size_t i) { return mask.empty() || mask[i]; }
} // namespace detail

// ---------------------------------------------------------------------------
// z-score

/// |x - mu| / max(sigma, eps) with mu and population sigma taken over the
/// non-NaN points selected by `fit_rows` (all when empty).
inline std::vector<double> zscore_detector(std::span<const double> x, const std::vector<bool>& fit_rows = {}) {
    if (x.size() < 2) throw Error(ErrorCode::SeriesTooShort, "z-score needs at least 2 points");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (detail::selected(fit_rows, i) && !std::isnan(x[i])) {
            sum += x[i];
            ++count;
        }
    if (count == 0) throw Error(ErrorCode::AllMissingColumn, "no observed values to fit z-score");
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (detail::selected(fit_rows, i) && !std::isnan(x[i])) sq += (x[i] - mean) * (x[i] - mean);
    const double scale = std::max(std::sqrt(sq / static_cast<double>(count)), kVarianceEpsilon);

    std::vector<double> scores(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) scores[i] = std::isnan(x[i]) ? kNaN : std::abs(x[i] - mean) / scale;
    return scores;
}

// ---------------------------------------------------------------------------
// Isolation forest

inline constexpr double kEulerGamma = 0.5772156649;

/// Average path length of an unsuccessful BST search over m points:
/// c(m) = 2 H(m-1) - 2 (m-1)/m with H(i) = ln(i) + gamma, and c(m <= 1) = 0.
inline double average_path_length(double m) {
    if (m <= 1.0) return 0.0;
    return 2.0 * (std::log(m - 1.0) + kEulerGamma) - 2.0 * (m - 1.0) / m;
}

/// s = 2^(-E[h] / c(psi)).
inline double isolation_score(double expected_path, double c_psi) { return std::exp2(-expected_path / c_psi); }

struct IForestOptions {
    std::size_t n_trees = 100;
    std::size_t subsample_size = 256;
    std::uint64_t seed = 0;
};

class IsolationForest {
public:
    struct Node {
        int feature = -1; ///< -1 marks an external node
        double split = 0.0;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        std::size_t size = 0;
    };
    using Tree = std::vector<Node>;

    /// Builds the forest on the rows selected by `fit_rows` that contain no NaN.
    static IsolationForest fit(const FeatureTable& table, const IForestOptions& opt,
                               const std::vector<bool>& fit_rows = {}) {
        if (opt.subsample_size < 2)
            throw Error(ErrorCode::SubsampleTooSmall,
                        "subsample size must be >= 2, got " + std::to_string(opt.subsample_size));
        std::vector<std::size_t> usable;
        for (std::size_t r = 0; r < table.rows(); ++r)
            if (detail::selected(fit_rows, r) && !table.row_has_nan(r)) usable.push_back(r);
        if (usable.size() < 2)
            throw Error(ErrorCode::SubsampleTooSmall, "isolation forest needs at least 2 complete rows");

        IsolationForest forest;
        forest.psi_ = std::min(opt.subsample_size, usable.size());
        forest.c_psi_ = average_path_length(static_cast<double>(forest.psi_));
        forest.max_depth_ = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(forest.psi_))));
        forest.cols_ = table.cols();

        Rng rng(opt.seed);
        forest.trees_.reserve(opt.n_trees);
        for (std::size_t t = 0; t < opt.n_trees; ++t) {
            auto picks = sample_without_replacement(usable.size(), forest.psi_, rng);
            std::vector<std::size_t> rows;
            rows.reserve(picks.size());
            for (auto p : picks) rows.push_back(usable[p]);
            Tree tree;
            forest.grow(tree, table, rows, 0, rng);
            forest.trees_.push_back(std::move(tree));
        }
        return forest;
    }

    /// h(x) for one tree: depth of the external node plus c(size).
    double path_length(const Tree& tree, std::span<const double> x) const {
        std::size_t node = 0;
        double depth = 0.0;
        while (tree[node].feature >= 0) {
            const auto& nd = tree[node];
            node = x[static_cast<std::size_t>(nd.feature)] < nd.split ? nd.left : nd.right;
            depth += 1.0;
        }
        return depth + average_path_length(static_cast<double>(tree[node].size));
    }

    double expected_path_length(std::span<const double> x) const {
        double sum = 0.0;
        for (const auto& tree : trees_) sum += path_length(tree, x);
        return sum / static_cast<double>(trees_.size());
    }

    double score(std::span<const double> x) const { return isolation_score(expected_path_length(x), c_psi_); }

    /// Per-row scores; rows with NaN get NaN.
    std::vector<double> score(const FeatureTable& table) const {
        if (table.cols() != cols_)
            throw Error(ErrorCode::LengthMismatch, "forest fitted on " + std::to_string(cols_) + " columns, got " +
                                                       std::to_string(table.cols()));
        std::vector<double> out(table.rows());
        for (std::size_t r = 0; r < table.rows(); ++r)
            out[r] = table.row_has_nan(r) ? kNaN : score(table.values.row(r));
        return out;
    }

    std::size_t sample_size() const noexcept { return psi_; }
    std::size_t max_depth() const noexcept { return max_depth_; }
    const std::vector<Tree>& trees() const noexcept { return trees_; }

private:
    std::uint32_t grow(Tree& tree, const FeatureTable& table, std::vector<std::size_t>& rows, std::size_t depth,
                       Rng& rng) {
        const auto id = static_cast<std::uint32_t>(tree.size());
        tree.push_back(Node{-1, 0.0, 0, 0, rows.size()});
        if (rows.size() <= 1 || depth >= max_depth_) return id;

        // Only features that vary within the node can split it.
        std::vector<std::size_t> candidates;
        std::vector<std::pair<double, double>> ranges(cols_);
        for (std::size_t c = 0; c < cols_; ++c) {
            double lo = table.values(rows[0], c), hi = lo;
            for (auto r : rows) {
                lo = std::min(lo, table.values(r, c));
                hi = std::max(hi, table.values(r, c));
            }
            ranges[c] = {lo, hi};
            if (hi > lo) candidates.push_back(c);
        }
        if (candidates.empty()) return id;

        const std::size_t feature = candidates[rng.below(candidates.size())];
        const auto [lo, hi] = ranges[feature];
        // Split in (lo, hi] so both children are non-empty under x < split.
        double split = lo + rng.uniform_open_closed() * (hi - lo);
        if (split <= lo) split = hi;

        std::vector<std::size_t> left, right;
        for (auto r : rows) (table.values(r, feature) < split ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        const auto l = grow(tree, table, left, depth + 1, rng);
        const auto rr = grow(tree, table, right, depth + 1, rng);
        tree[id].feature = static_cast<int>(feature);
        tree[id].split = split;
        tree[id].left = l;
        tree[id].right = rr;
        return id;
    }

    std::vector<Tree> trees_;
    std::size_t psi_ = 0;
    double c_psi_ = 0.0;
    std::size_t max_depth_ = 0;
    std::size_t cols_ = 0;
};

// ---------------------------------------------------------------------------
// k nearest neighbours

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

/// Distance from every row to its k-th nearest *other* reference row. The
/// reference set is the rows selected by `reference_rows` (all when empty);
/// rows containing NaN are neither scored nor used as references.
inline std::vector<double> knn_detector(const FeatureTable& table, long long k,
                                        const std::vector<bool>& reference_rows = {}) {
    if (k < 1) throw Error(ErrorCode::KTooLarge, "k must be >= 1");
    const auto kk = static_cast<std::size_t>(k);
    std::vector<std::size_t> refs;
    for (std::size_t r = 0; r < table.rows(); ++r)
        if (detail::selected(reference_rows, r) && !table.row_has_nan(r)) refs.push_back(r);
    if (refs.size() <= kk)
        throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(kk) + " needs more than " + std::to_string(kk) +
                                              " reference rows, have " + std::to_string(refs.size()));

    std::vector<double> scores(table.rows(), kNaN);
    std::vector<double> dists;
    dists.reserve(refs.size());
    for (std::size_t i = 0; i < table.rows(); ++i) {
        if (table.row_has_nan(i)) continue;
        dists.clear();
        for (auto j : refs)
            if (j != i) dists.push_back(euclidean(table.values.row(i), table.values.row(j)));
        std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(kk - 1), dists.end());
        scores[i] = dists[kk - 1];
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Autoregressive residuals

inline constexpr double kRidgeLambda = 1e-8;

namespace detail {

/// Cholesky solve of a symmetric system; returns false when a pivot is not
/// safely positive relative to the original diagonal.
inline bool cholesky_solve(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double>& x) {
    const std::size_t n = b.size();
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j][j];
        for (std::size_t k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
        if (!(d > 1e-10 * std::max(a[j][j], 1e-300))) return false;
        l[j][j] = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i][j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            l[i][j] = s / l[j][j];
        }
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * y[k];
        y[i] = s / l[i][i];
    }
    x.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l[k][i] * x[k];
        x[i] = s / l[i][i];
    }
    return true;
}

} // namespace detail

/// Least-squares AR(p) fit with intercept: coefficients [c, a_1 .. a_p] so
/// that x_t ~ c + sum a_k x_{t-k}.
struct ArModel {
    std::vector<double> coefficients;
    bool ridge_used = false;

    double predict(std::span<const double> x, std::size_t t) const {
        double y = coefficients[0];
        for (std::size_t k = 1; k < coefficients.size(); ++k) y += coefficients[k] * x[t - k];
        return y;
    }
};

/// Fits on rows t in [p, ceil(train_fraction * n)) whose lags are observed
/// and which `fit_rows` selects. A singular normal matrix is retried with a
/// ridge of 1e-8 on the diagonal.
inline ArModel ar_fit(std::span<const double> x, long long order, double train_fraction,
                      const std::vector<bool>& fit_rows = {}) {
    if (order < 1) throw Error(ErrorCode::SeriesTooShort, "AR order must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw Error(ErrorCode::HyperparamOutOfRange, "train_fraction must be in (0, 1]");
    const auto p = static_cast<std::size_t>(order);
    const std::size_t n = x.size();
    if (n < 3 * p)
        throw Error(ErrorCode::SeriesTooShort,
                    "AR(" + std::to_string(p) + ") needs at least " + std::to_string(3 * p) + " points, got " +
                        std::to_string(n));
    const auto fit_end =
        std::min(n, static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9)));

    const std::size_t dim = p + 1;
    std::vector<std::vector<double>> xtx(dim, std::vector<double>(dim, 0.0));
    std::vector<double> xty(dim, 0.0);
    std::vector<double> row(dim);
    std::size_t used = 0;
    for (std::size_t t = p; t < fit_end; ++t) {
        if (!detail::selected(fit_rows, t) || std::isnan(x[t])) continue;
        bool ok = true;
        row[0] = 1.0;
        for (std::size_t k = 1; k <= p; ++k) {
            row[k] = x[t - k];
            ok = ok && !std::isnan(row[k]);
        }
        if (!ok) continue;
        for (std::size_t i = 0; i < dim; ++i) {
            xty[i] += row[i] * x[t];
            for (std::size_t j = 0; j < dim; ++j) xtx[i][j] += row[i] * row[j];
        }
        ++used;
    }
    if (used == 0) throw Error(ErrorCode::SeriesTooShort, "no complete training rows for AR fit");

    ArModel model;
    if (!detail::cholesky_solve(xtx, xty, model.coefficients)) {
        for (std::size_t i = 0; i < dim; ++i) xtx[i][i] += kRidgeLambda;
        model.ridge_used = true;
        if (!detail::cholesky_solve(xtx, xty, model.coefficients))
            throw Error(ErrorCode::SeriesTooShort, "AR normal equations are singular even with ridge");
    }
    return model;
}

/// |x_t - x_hat_t| for t >= p; NaN for t < p or where inputs are missing.
inline std::vector<double> ar_residual_scores(std::span<const double> x, const ArModel& model) {
    const std::size_t p = model.coefficients.size() - 1;
    std::vector<double> scores(x.size(), kNaN);
    for (std::size_t t = p; t < x.size(); ++t) {
        const double pred = model.predict(x, t);
        if (!std::isnan(pred) && !std::isnan(x[t])) scores[t] = std::abs(x[t] - pred);
    }
    return scores;
}

inline std::vector<double> ar_residual_detector(std::span<const double> x, long long order, double train_fraction,
                                                const std::vector<bool>& fit_rows = {}) {
    return ar_residual_scores(x, ar_fit(x, order, train_fraction, fit_rows));
}

// ---------------------------------------------------------------------------
// Matrix profile

/// Z-normalized copy of one subsequence; a (numerically) constant
/// subsequence maps to the zero vector.
inline std::vector<double> z_normalize(std::span<const double> s) {
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double sq = 0.0;
    for (double v : s) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(s.size()));
    std::vector<double> z(s.size(), 0.0);
    if (sd < kVarianceEpsilon) return z;
    for (std::size_t i = 0; i < s.size(); ++i) z[i] = (s[i] - mean) / sd;
    return z;
}

/// Brute-force matrix profile with exclusion radius w. Entry i is the
/// minimum z-normalized distance from subsequence i to any subsequence j with
/// |i - j| >= w; starts without such a neighbour, starts past n - w, and
/// subsequences containing NaN are NaN. The result has length n.
inline std::vector<double> matrix_profile_discord(std::span<const double> x, long long window) {
    if (window < 1) throw Error(ErrorCode::NonPositiveWindow, "window must be >= 1");
    const auto w = static_cast<std::size_t>(window);
    const std::size_t n = x.size();
    if (n < 2 * w)
        throw Error(ErrorCode::WindowTooLarge,
                    "matrix profile needs n >= 2w (n = " + std::to_string(n) + ", w = " + std::to_string(w) + ")");
    const std::size_t count = n - w + 1;
    std::vector<std::vector<double>> z(count);
    std::vector<bool> valid(count, true);
    for (std::size_t i = 0; i < count; ++i) {
        auto sub = x.subspan(i, w);
        valid[i] = std::none_of(sub.begin(), sub.end(), [](double v) { return std::isnan(v); });
        if (valid[i]) z[i] = z_normalize(sub);
    }
    std::vector<double> profile(n, kNaN);
    for (std::size_t i = 0; i < count; ++i) {
        if (!valid[i]) continue;
        double best = kNaN;
        for (std::size_t j = 0; j < count; ++j) {
            if (!valid[j] || (i > j ? i - j : j - i) < w) continue;
            const double d = euclidean(z[i], z[j]);
            if (std::isnan(best) || d < best) best = d;
        }
        profile[i] = best;
    }
    return profile;
}

// ---------------------------------------------------------------------------
// Scores to labels

/// Labels exactly ceil(contamination * m) of the m non-NaN scores as 1,
/// highest first, ties to the lower index.
inline std::vector<std::uint8_t> threshold_labels(std::span<const double> scores, double contamination) {
    if (!(contamination >= 0.0 && contamination <= 1.0))
        throw Error(ErrorCode::ContaminationOutOfRange, "contamination must be in [0, 1]");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!std::isnan(scores[i])) order.push_back(i);
    const auto m = static_cast<double>(order.size());
    // The slack absorbs representation error in products like (1/3) * 3.
    const auto top = static_cast<std::size_t>(std::max(0.0, std::ceil(contamination * m - 1e-9)));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::uint8_t> labels(scores.size(), 0);
    for (std::size_t i = 0; i < std::min(top, order.size()); ++i) labels[order[i]] = 1;
    return labels;
}

// ---------------------------------------------------------------------------
// Rule-based reinforcement filter

enum class PredicateKind { InRange, OutsideRange, TimeIn };
enum class RuleAction { ForceNormal, ForceOutlier };

struct Rule {
    std::string feature; ///< column name, or "prediction" for the current label
    PredicateKind kind = PredicateKind::InRange;
    double lo = 0.0;
    double hi = 0.0;
    RuleAction action = RuleAction::ForceNormal;

    bool operator==(const Rule&) const = default;
};

inline constexpr std::string_view kPredictionFeature = "prediction";

/// Applies rules in order. A rule's predicate sees the label as left by the
/// earlier rules, so later rules win conflicts.
inline std::vector<std::uint8_t> rule_based_filter(std::span<const std::uint8_t> labels, const TimeSeriesDataset& ds,
                                                   const std::vector<Rule>& rules) {
    if (labels.size() != ds.size())
        throw Error(ErrorCode::LengthMismatch, "labels have length " + std::to_string(labels.size()) +
                                                   ", dataset has " + std::to_string(ds.size()));
    std::vector<const std::vector<double>*> columns(rules.size(), nullptr);
    for (std::size_t k = 0; k < rules.size(); ++k) {
        const auto& rule = rules[k];
        if (rule.kind == PredicateKind::TimeIn || rule.feature == kPredictionFeature) continue;
        auto idx = ds.column_index(rule.feature);
        if (!idx) throw Error(ErrorCode::UnknownFeature, "rule references unknown feature '" + rule.feature + "'");
        columns[k] = &ds.features[*idx];
    }
    std::vector<std::uint8_t> out(labels.begin(), labels.end());
    for (std::size_t k = 0; k < rules.size(); ++k) {
        const auto& rule = rules[k];
        for (std::size_t i = 0; i < out.size(); ++i) {
            bool match = false;
            if (rule.kind == PredicateKind::TimeIn) {
                const auto ts = static_cast<double>(ds.timestamps[i]);
                match = ts >= rule.lo && ts <= rule.hi;
            } else {
                const double v = columns[k] ? (*columns[k])[i] : static_cast<double>(out[i]);
                if (std::isnan(v)) continue;
                const bool inside = v >= rule.lo && v <= rule.hi;
                match = rule.kind == PredicateKind::InRange ? inside : !inside;
            }
            if (match) out[i] = rule.action == RuleAction::ForceOutlier ? 1 : 0;
        }
    }
    return out;
}

} // namespace tsods::detection
