// SPDX-License-Identifier: Apache-2.0
// Writes the seeded spike benchmark as CSV (timestamp, value, label).

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tsods/dataset.hpp"
#include "tsods/synthetic.hpp"

int main(int argc, char** argv) {
    tsods::SpikeBenchmarkOptions opt;
    std::string out = "-";
    CLI::App app{"Generate a seasonal series with planted spikes"};
    app.add_option("--out", out, "output path, - for stdout")->capture_default_str();
    app.add_option("--length", opt.length)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--spikes", opt.spikes)->capture_default_str();
    app.add_option("--magnitude", opt.magnitude, "spike size in standard deviations")->capture_default_str();
    app.add_option("--noise", opt.noise)->capture_default_str();
    app.add_option("--period", opt.period)->capture_default_str();
    app.add_option("--seed", opt.seed)->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    const auto csv = tsods::to_csv(tsods::make_spike_benchmark(opt));
    if (out == "-") {
        std::cout << csv;
        return 0;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) {
        std::cerr << "cannot write " << out << "\n";
        return 2;
    }
    f << csv;
    return 0;
}
