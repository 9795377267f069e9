// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "tsods/dataset.hpp"
#include "tsods/random.hpp"

namespace tsods {

struct SpikeBenchmarkOptions {
    std::size_t length = 2000;
    std::size_t spikes = 10;
    double period = 50.0;
    double amplitude = 1.0;
    double noise = 0.1;
    double magnitude = 8.0; ///< spike size in standard deviations of the clean series
    std::uint64_t seed = 7;
};

/// Seasonal sine plus Gaussian noise with point spikes, one per equal-length
/// segment so every contiguous fold holds at least one. The spike position
/// inside a segment avoids the segment's first and last few points.
inline TimeSeriesDataset make_spike_benchmark(const SpikeBenchmarkOptions& opt = {}) {
    Rng rng(opt.seed);
    const std::size_t n = opt.length;
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t)
        x[t] = opt.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / opt.period) +
               rng.normal(0.0, opt.noise);

    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));

    std::vector<std::uint8_t> labels(n, 0);
    if (opt.spikes > 0) {
        const std::size_t seg = n / opt.spikes;
        const std::size_t margin = seg > 8 ? 2 : 0;
        for (std::size_t s = 0; s < opt.spikes && seg > 2 * margin; ++s) {
            const std::size_t pos = s * seg + margin + rng.below(seg - 2 * margin);
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            x[pos] += sign * opt.magnitude * sd;
            labels[pos] = 1;
        }
    }

    TimeSeriesDataset ds;
    ds.name = "spike_benchmark";
    ds.timestamps.resize(n);
    for (std::size_t t = 0; t < n; ++t) ds.timestamps[t] = static_cast<std::int64_t>(t);
    ds.feature_names = {"value"};
    ds.features = {std::move(x)};
    ds.labels = std::move(labels);
    return ds;
}

} // namespace tsods
