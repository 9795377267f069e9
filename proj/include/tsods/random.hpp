// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <unordered_map>
#include <vector>

namespace tsods {

/// Seeded generator with distributions defined here rather than by the
/// standard library, so sequences are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_open_closed() { return 1.0 - uniform(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound), bound > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Standard normal via Box-Muller (one value per call, the pair's sine half is cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open_closed();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Draws a uniformly random ordered sample of `count` distinct values from
/// [0, population) with a sparse partial Fisher-Yates shuffle. For a fixed
/// seed the first k draws of a longer sample equal a sample of size k.
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count,
                                                             Rng& rng) {
    if (count > population) count = population;
    std::unordered_map<std::uint64_t, std::uint64_t> swapped;
    auto at = [&](std::uint64_t i) {
        auto it = swapped.find(i);
        return it == swapped.end() ? i : it->second;
    };
    std::vector<std::uint64_t> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t j = i + rng.below(population - i);
        const std::uint64_t vi = at(i);
        const std::uint64_t vj = at(j);
        swapped[j] = vi;
        out.push_back(vj);
    }
    return out;
}

} // namespace tsods
