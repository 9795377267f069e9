// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tsods/error.hpp"
#include "tsods/processing.hpp"
#include "tsods/random.hpp"
#include "tsods/table.hpp"

/// Feature-analysis primitives: per-window or per-series descriptors.
namespace tsods::features {

using processing::kNaN;

/// Biased sample autocorrelation r[0..max_lag]. Zero-variance series yield
/// r = [1, 0, 0, ...].
inline std::vector<double> autocorrelation(std::span<const double> x, long long max_lag) {
    const std::size_t n = x.size();
    if (n < 2) throw Error(ErrorCode::SeriesTooShort, "autocorrelation needs at least 2 points");
    if (max_lag < 0 || static_cast<std::size_t>(max_lag) >= n)
        throw Error(ErrorCode::LagTooLarge, "max_lag " + std::to_string(max_lag) + " must be in [0, " +
                                                std::to_string(n - 1) + "]");
    const auto lags = static_cast<std::size_t>(max_lag);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);

    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);

    std::vector<double> r(lags + 1, 0.0);
    r[0] = 1.0;
    if (!(denom > 0.0)) return r;
    for (std::size_t k = 1; k <= lags; ++k) {
        double num = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) num += (x[t] - mean) * (x[t + k] - mean);
        r[k] = num / denom;
    }
    return r;
}

struct MomentStats {
    double mean, std, min, max, skewness, kurtosis;
};

/// Population moments of one window. Skewness and excess kurtosis are 0 when
/// the window has (numerically) zero variance.
inline MomentStats moments(std::span<const double> w) {
    const double m = static_cast<double>(w.size());
    MomentStats s{};
    double sum = 0.0;
    s.min = w[0];
    s.max = w[0];
    for (double v : w) {
        if (std::isnan(v)) return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean = sum / m;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : w) {
        const double d = v - s.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= m;
    m3 /= m;
    m4 /= m;
    s.std = std::sqrt(m2);
    if (s.std <= processing::kVarianceEpsilon * std::max(1.0, std::abs(s.mean))) {
        s.std = 0.0;
        s.skewness = 0.0;
        s.kurtosis = 0.0;
    } else {
        s.skewness = m3 / std::pow(m2, 1.5);
        s.kurtosis = m4 / (m2 * m2) - 3.0;
    }
    return s;
}

inline const std::vector<std::string>& window_statistic_names() {
    static const std::vector<std::string> names{"mean", "std", "min", "max", "skewness", "kurtosis"};
    return names;
}

inline FeatureTable window_statistics(std::span<const double> x, long long window, long long stride) {
    auto seg = processing::segment_subsequences(x, window, stride);
    FeatureTable t;
    t.values = Matrix(seg.rows.rows(), 6);
    for (std::size_t i = 0; i < seg.rows.rows(); ++i) {
        const auto s = moments(seg.rows.row(i));
        const double vals[6] = {s.mean, s.std, s.min, s.max, s.skewness, s.kurtosis};
        for (std::size_t c = 0; c < 6; ++c) t.values(i, c) = vals[c];
    }
    t.row_index = std::move(seg.starts);
    t.column_names = window_statistic_names();
    return t;
}

/// Full discrete Fourier transform by direct summation. The twiddle angle is
/// reduced modulo the window length for accuracy.
inline std::vector<std::complex<double>> dft(std::span<const double> x) {
    const std::size_t w = x.size();
    std::vector<std::complex<double>> out(w);
    for (std::size_t k = 0; k < w; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t t = 0; t < w; ++t) {
            const double angle =
                -2.0 * std::numbers::pi * static_cast<double>((k * t) % w) / static_cast<double>(w);
            acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        out[k] = acc;
    }
    return out;
}

/// |X_k| for k = 1..n_bins of one window (DC excluded).
inline std::vector<double> dft_bin_magnitudes(std::span<const double> x, std::size_t n_bins) {
    const auto spectrum = dft(x);
    std::vector<double> mags(n_bins);
    for (std::size_t k = 1; k <= n_bins; ++k) mags[k - 1] = std::abs(spectrum[k]);
    return mags;
}

inline FeatureTable dft_magnitudes(std::span<const double> x, long long window, long long stride, long long n_bins) {
    if (n_bins < 1 || window < 1 || n_bins > window / 2)
        throw Error(ErrorCode::TooManyBins, "n_bins " + std::to_string(n_bins) + " must be in [1, window/2 = " +
                                                std::to_string(window / 2) + "]");
    auto seg = processing::segment_subsequences(x, window, stride);
    const auto bins = static_cast<std::size_t>(n_bins);
    FeatureTable t;
    t.values = Matrix(seg.rows.rows(), bins);
    for (std::size_t i = 0; i < seg.rows.rows(); ++i) {
        const auto mags = dft_bin_magnitudes(seg.rows.row(i), bins);
        for (std::size_t k = 0; k < bins; ++k) t.values(i, k) = mags[k];
    }
    t.row_index = std::move(seg.starts);
    for (std::size_t k = 1; k <= bins; ++k) t.column_names.push_back("dft_" + std::to_string(k));
    return t;
}

// ---------------------------------------------------------------------------
// Nonnegative matrix factorization (Lee-Seung multiplicative updates)

inline constexpr double kNmfEpsilon = 1e-12;

struct NmfResult {
    Matrix W;                        ///< m x r
    Matrix H;                        ///< r x n
    std::vector<double> error_trace; ///< ||V - WH||_F^2 after each iteration
};

struct NmfOptions {
    std::size_t rank = 2;
    std::size_t max_iter = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

namespace detail {

inline Matrix multiply(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline double frobenius_sq_residual(const Matrix& v, const Matrix& w, const Matrix& h) {
    const Matrix wh = multiply(w, h);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) {
            const double d = v(i, j) - wh(i, j);
            sum += d * d;
        }
    return sum;
}

inline Matrix random_factor(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.uniform_open_closed();
    return m;
}

/// H <- H .* (W^T V) ./ (W^T W H + eps)
inline void update_h(const Matrix& v, const Matrix& w, Matrix& h) {
    const Matrix wt = transpose(w);
    const Matrix num = multiply(wt, v);
    const Matrix den = multiply(multiply(wt, w), h);
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) *= num(i, j) / (den(i, j) + kNmfEpsilon);
}

/// W <- W .* (V H^T) ./ (W H H^T + eps)
inline void update_w(const Matrix& v, Matrix& w, const Matrix& h) {
    const Matrix ht = transpose(h);
    const Matrix num = multiply(v, ht);
    const Matrix den = multiply(w, multiply(h, ht));
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) *= num(i, j) / (den(i, j) + kNmfEpsilon);
}

inline void check_nonnegative(const Matrix& v) {
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j)
            if (!(v(i, j) >= 0.0) || !std::isfinite(v(i, j)))
                throw Error(ErrorCode::NegativeEntry, "entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                                          ") is negative or not finite");
}

inline bool converged(const std::vector<double>& trace, double tol) {
    if (trace.size() < 2) return false;
    const double prev = trace[trace.size() - 2];
    const double cur = trace.back();
    if (prev <= 0.0) return true;
    return (prev - cur) / prev < tol;
}

} // namespace detail

/// Factorizes V ~ W H minimizing the squared Frobenius error. Each iteration
/// updates H then W. Stops after max_iter iterations or once the relative
/// improvement of the objective drops below tol.
inline NmfResult nmf_fit(const Matrix& v, const NmfOptions& opt) {
    detail::check_nonnegative(v);
    if (opt.rank < 1 || opt.rank > std::min(v.rows(), v.cols()))
        throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(opt.rank) + " must be in [1, " +
                                                 std::to_string(std::min(v.rows(), v.cols())) + "]");
    Rng rng(opt.seed);
    NmfResult res{detail::random_factor(v.rows(), opt.rank, rng), detail::random_factor(opt.rank, v.cols(), rng), {}};
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        detail::update_h(v, res.W, res.H);
        detail::update_w(v, res.W, res.H);
        res.error_trace.push_back(detail::frobenius_sq_residual(v, res.W, res.H));
        if (detail::converged(res.error_trace, opt.tol)) break;
    }
    return res;
}

/// Coefficients W for new rows against fixed basis H, using the same
/// multiplicative W update.
inline Matrix nmf_project(const Matrix& v, const Matrix& h, const NmfOptions& opt) {
    detail::check_nonnegative(v);
    Rng rng(opt.seed ^ 0x9E3779B97F4A7C15ULL);
    Matrix w = detail::random_factor(v.rows(), h.rows(), rng);
    std::vector<double> trace;
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        detail::update_w(v, w, h);
        trace.push_back(detail::frobenius_sq_residual(v, w, h));
        if (detail::converged(trace, opt.tol)) break;
    }
    return w;
}

/// Row-wise reconstruction error ||V_i - (WH)_i||_2.
inline std::vector<double> nmf_residual_features(const Matrix& v, const Matrix& w, const Matrix& h) {
    const Matrix wh = detail::multiply(w, h);
    std::vector<double> out(v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < v.cols(); ++j) {
            const double d = v(i, j) - wh(i, j);
            sum += d * d;
        }
        out[i] = std::sqrt(sum);
    }
    return out;
}

} // namespace tsods::features
