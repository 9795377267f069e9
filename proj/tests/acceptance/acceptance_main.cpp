// SPDX-License-Identifier: Apache-2.0
// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <fmt/format.h>

#include "fixture_files.hpp"
#include "oracles.hpp"
#include "tsods/service.hpp"
#include "tsods/tsods.hpp"

namespace fs = std::filesystem;
using namespace tsods;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

bool same_or_close(double a, double b, double tol) {
    if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
    return std::abs(a - b) <= tol;
}

Verdict oracle_equivalence() {
    const auto start = Clock::now();
    Rng rng(1001);
    std::size_t knn_bad = 0, mp_bad = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 16 + rng.below(241);
        const auto x = oracle::gaussian_series(n, 500 + static_cast<std::uint64_t>(trial));

        const std::size_t d = 1 + rng.below(4);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i + d <= n; ++i) rows.emplace_back(x.begin() + i, x.begin() + i + d);
        std::vector<std::vector<double>> cols(d, std::vector<double>(rows.size()));
        std::vector<std::size_t> idx(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            idx[r] = r;
            for (std::size_t c = 0; c < d; ++c) cols[c][r] = rows[r][c];
        }
        const auto table = from_columns(cols, std::vector<std::string>(d, "x"), idx);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(10, rows.size() - 1));
        const auto got = detection::knn_detector(table, static_cast<long long>(k));
        const auto want = oracle::knn(rows, k);
        for (std::size_t i = 0; i < got.size(); ++i) knn_bad += got[i] != want[i];

        const std::size_t w = 2 + rng.below(std::min<std::size_t>(30, n / 2 - 1));
        const auto mp = detection::matrix_profile_discord(x, static_cast<long long>(w));
        const auto mp_want = oracle::matrix_profile(x, w);
        for (std::size_t i = 0; i < n; ++i) mp_bad += !same_or_close(mp[i], mp_want[i], 1e-9);
    }
    const double secs = seconds_since(start);
    return {knn_bad == 0 && mp_bad == 0 && secs < 10.0,
            fmt::format("knn mismatches {} (bitwise), matrix profile mismatches {} (1e-9), {:.2f} s", knn_bad, mp_bad, secs)};
}

Verdict decomposition_identity() {
    Rng rng(1002);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const long long p = 2 + trial % 11;
        const std::size_t n = static_cast<std::size_t>(2 * p) + rng.below(200);
        std::vector<double> x(n);
        for (std::size_t t = 0; t < n; ++t)
            x[t] = rng.normal(0.0, 2.0) + std::sin(static_cast<double>(t % static_cast<std::size_t>(p))) + 0.01 * static_cast<double>(t);
        const auto dec = processing::seasonal_decomposition(x, p);
        for (std::size_t t = 0; t < n; ++t)
            if (!std::isnan(dec.residual[t]))
                worst = std::max(worst, std::abs(dec.trend[t] + dec.seasonal[t] + dec.residual[t] - x[t]));
    }
    return {worst <= 1e-9, fmt::format("max interior reconstruction error {:.3e} over 100 series, periods 2-12", worst)};
}

Verdict acf_golden() {
    const auto r = features::autocorrelation(std::vector<double>{1, -1, 1, -1, 1, -1, 1, -1}, 1);
    return {r[0] == 1.0 && std::abs(r[1] + 0.875) <= 1e-12, fmt::format("r[0] = {}, r[1] = {:.15f}", r[0], r[1])};
}

Verdict nmf() {
    Rng rng(1004);
    bool monotone = true;
    for (int trial = 0; trial < 20 && monotone; ++trial) {
        const std::size_t m = 3 + rng.below(20), n = 3 + rng.below(20);
        Matrix v(m, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) v(i, j) = rng.uniform(0.0, 4.0);
        const auto res = features::nmf_fit(v, {1 + rng.below(3), 300, 0.0, static_cast<std::uint64_t>(trial)});
        for (std::size_t i = 1; i < res.error_trace.size(); ++i)
            monotone = monotone && res.error_trace[i] <= res.error_trace[i - 1] + 1e-10 * std::max(1.0, res.error_trace[i - 1]);
    }
    double worst = 0.0;
    std::size_t iters = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 4 + rng.below(10), n = 4 + rng.below(10);
        Matrix v(m, n);
        std::vector<double> a(m), b(n);
        for (auto& e : a) e = rng.uniform(0.1, 3.0);
        for (auto& e : b) e = rng.uniform(0.1, 3.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) v(i, j) = a[i] * b[j];
        const auto res = features::nmf_fit(v, {1, 500, 0.0, static_cast<std::uint64_t>(trial)});
        iters = std::max(iters, res.error_trace.size());
        const auto wh = features::detail::multiply(res.W, res.H);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                num += (v(i, j) - wh(i, j)) * (v(i, j) - wh(i, j));
                den += v(i, j) * v(i, j);
            }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return {monotone && worst < 1e-6 && iters <= 500,
            fmt::format("trace monotone {}, rank-1 worst relative error {:.3e} in <= {} iterations", monotone, worst, iters)};
}

Verdict iforest() {
    const double c2 = detection::average_path_length(2.0);
    const double c64 = detection::average_path_length(64.0);
    const double half = detection::isolation_score(c64, c64);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto x = oracle::gaussian_series(100, 7000 + seed);
        x[static_cast<std::size_t>(seed % 100)] = 10.0;
        std::vector<std::size_t> idx(100);
        for (std::size_t i = 0; i < 100; ++i) idx[i] = i;
        const auto t = from_columns({x}, {"x"}, idx);
        const auto s = detection::IsolationForest::fit(t, {100, 64, seed}).score(t);
        hits += static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()) == seed % 100;
    }
    return {std::abs(c2 - 0.1544313298) <= 1e-9 && hits >= 95 && half == 0.5,
            fmt::format("c(2) = {:.10f}, outlier argmax in {}/100 seeds, s(E[h] = c(64)) = {}", c2, hits, half)};
}

Verdict scoring_check() {
    const std::vector<std::uint8_t> pred{1, 1, 1, 0, 0}, truth{1, 1, 0, 1, 0};
    const auto r = score(pred, truth);
    const bool golden = std::abs(r.precision - 2.0 / 3) <= 1e-12 && std::abs(r.recall - 2.0 / 3) <= 1e-12 &&
                        std::abs(r.f1 - 2.0 / 3) <= 1e-12 && r.tp == 2 && r.fp == 1 && r.fn == 1;
    Rng rng(1006);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<std::uint8_t> p(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform() < 0.1;
            t[i] = (i > 0 && t[i - 1]) ? rng.uniform() < 0.8 : rng.uniform() < 0.03;
        }
        const auto rep = score(p, t);
        violations += rep.f1 > rep.f1_pa + 1e-12;
    }
    return {golden && violations == 0,
            fmt::format("P = R = F1 = {:.12f}; plain > adjusted in {}/1000 pairs", r.f1, violations)};
}

Verdict searcher() {
    const auto ds = make_spike_benchmark({.length = 600, .spikes = 6});
    const auto space = parse_search_space(R"({
      "slots": {
        "data_processing": [{"primitive": "tods.data_processing.timestamp_validation"}],
        "ts_processing": [{"primitive": "tods.timeseries_processing.standardize"}],
        "feature_analysis": [{"primitive": "tods.feature_analysis.window_statistics", "grid": {"window": [1, 4, 16]}}],
        "detection": [{"primitive": "tods.detection.iforest", "grid": {"subsample_size": [64]}},
                      {"primitive": "tods.detection.knn"}]
      },
      "threshold": {"contamination": [0.01]}
    })");
    SearchOptions opt;
    opt.strategy = SearchStrategy::Exhaustive;
    opt.budget = space.size();
    const auto res = search(ds, space, opt);

    std::size_t best_ord = 0;
    double best = -2.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
        double agg = -1.0;
        try {
            agg = evaluate_pipeline(ds, candidate_at(space, i), opt.metric, opt.scheme).aggregate;
        } catch (const Error&) {
        }
        if (agg > best) best = agg, best_ord = i;
    }

    SearchOptions rnd;
    rnd.budget = 4;
    rnd.seed = 99;
    const auto a = search(ds, space, rnd), b = search(ds, space, rnd);
    bool reproducible = a.leaderboard.size() == b.leaderboard.size();
    for (std::size_t i = 0; reproducible && i < a.leaderboard.size(); ++i)
        reproducible = a.leaderboard[i].ordinal == b.leaderboard[i].ordinal &&
                       a.leaderboard[i].aggregate == b.leaderboard[i].aggregate &&
                       serialize_pipeline(a.leaderboard[i].pipeline) == serialize_pipeline(b.leaderboard[i].pipeline);
    return {space.size() == 6 && res.best().ordinal == best_ord && res.best().aggregate == best && reproducible,
            fmt::format("space {}, search winner #{} ({:.4f}) vs loop winner #{} ({:.4f}); random rerun identical {}",
                        space.size(), res.best().ordinal, res.best().aggregate, best_ord, best, reproducible)};
}

struct Shell {
    int code = -1;
    std::string out;
};

Shell sh(const std::string& cmd) {
    Shell s;
    FILE* p = ::popen((cmd + " 2>/dev/null").c_str(), "r");
    if (!p) return s;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) s.out.append(buf, n);
    const int status = ::pclose(p);
    s.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return s;
}

Verdict end_to_end() {
    const auto start = Clock::now();
    const auto ds = make_spike_benchmark();
    const auto dir = fs::temp_directory_path() / ("tsods_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto csv = dir / "bench.csv";
    std::ofstream(csv, std::ios::binary) << to_csv(ds);

    const auto pipeline_file = fixtures::root() / "pipelines/valid/01_default_iforest.json";
    const auto def = parse_pipeline(fixtures::read(pipeline_file));
    std::string chain;
    for (const auto& s : def.steps) chain += (chain.empty() ? "" : ">") + s.primitive_id.substr(s.primitive_id.rfind('.') + 1);
    const auto ev = evaluate_pipeline(ds, def, Metric::F1PointAdjusted);
    const auto plain = evaluate_pipeline(ds, def, Metric::F1).aggregate;

    const auto out = dir / "best.json";
    const auto r = sh(fmt::format("{} search --data {} --target-index 2 --budget 20 --metric f1_pa --report json --out {}",
                                  TSODS_CLI, csv.string(), out.string()));
    double searched = -1.0;
    if (r.code == 0) searched = json::parse(r.out).at("leaderboard")[0].at("aggregate").get<double>();
    const bool written = fs::exists(out);
    fs::remove_all(dir);
    const double secs = seconds_since(start);
    const bool chain_ok = chain == "timestamp_validation>standardize>window_statistics>iforest>threshold";
    return {chain_ok && ev.aggregate >= 0.8 && r.code == 0 && written && searched >= ev.aggregate && secs < 60.0,
            fmt::format("default PA-F1 {:.4f} (plain F1 {:.4f}); tods search --budget 20 best {:.4f} (exit {}); {:.1f} s",
                        ev.aggregate, plain, searched, r.code, secs)};
}

Verdict pipeline_language() {
    std::size_t golden = 0, golden_ok = 0, invalid = 0, invalid_ok = 0;
    for (const auto& path : fixtures::json_files("pipelines/valid")) {
        ++golden;
        try {
            const auto text = fixtures::read(path);
            golden_ok += serialize_pipeline(parse_pipeline(text)) == text;
        } catch (const Error&) {
        }
    }
    bool forward = false, unknown = false, range = false;
    for (const auto& path : fixtures::json_files("pipelines/invalid")) {
        ++invalid;
        const auto want = fixtures::expected_error(path);
        std::string got = "none";
        try {
            parse_pipeline(fixtures::read(path));
        } catch (const Error& e) {
            got = e.name();
        }
        invalid_ok += got == want;
        forward = forward || (want == "ForwardReference" && got == want);
        unknown = unknown || (want == "UnknownPrimitive" && got == want);
        range = range || (want == "HyperparamOutOfRange" && got == want);
    }
    return {golden == 20 && golden_ok == golden && invalid_ok == invalid && forward && unknown && range,
            fmt::format("{}/{} golden files byte-identical, {}/{} invalid fixtures raise their named error", golden_ok,
                        golden, invalid_ok, invalid)};
}

Verdict service_api() {
    const auto start = Clock::now();
    service::ServiceOptions opts;
    opts.workers = 2;
    service::Service svc(opts);
    const int port = svc.bind_to_any_port("127.0.0.1");
    std::thread th([&] { svc.listen_after_bind(); });
    svc.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    std::vector<std::string> problems;
    auto expect = [&](const httplib::Result& res, int status, const std::string& what) -> json {
        if (!res || res->status != status) {
            problems.push_back(what + " -> " + (res ? std::to_string(res->status) : "no response"));
            return json();
        }
        return json::parse(res->body, nullptr, false);
    };

    const auto pipeline = json::parse(fixtures::read(fixtures::root() / "pipelines/valid/01_default_iforest.json"));
    const auto handle = expect(c.Post("/api/datasets?target_index=2", to_csv(make_spike_benchmark({.length = 1000, .spikes = 5})),
                                      "text/csv"),
                               201, "upload");
    const std::string id = handle.value("id", "");
    const auto diags = expect(c.Post("/api/pipelines/validate", pipeline.dump(), "application/json"), 200, "validate");
    if (!diags.is_object() || !diags.at("diagnostics").empty()) problems.push_back("validate returned diagnostics");
    const auto job = expect(c.Post("/api/runs", json{{"dataset_id", id}, {"pipeline", pipeline}}.dump(), "application/json"),
                            202, "run");
    const std::string job_id = job.value("job_id", "");
    std::string status;
    while (seconds_since(start) < 5.0) {
        const auto j = expect(c.Get("/api/runs/" + job_id), 200, "poll");
        status = j.value("status", "");
        if (status == "succeeded" || status == "failed" || status.empty()) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (status != "succeeded") problems.push_back("run ended as '" + status + "'");
    const auto plot = expect(c.Get("/api/runs/" + job_id + "/scores"), 200, "scores");
    if (!plot.is_object() || plot.at("scores").size() != 1000) problems.push_back("scores payload");
    const double happy = seconds_since(start);

    auto bad = pipeline;
    bad["steps"][0]["primitive_id"] = "tods.nope";
    const auto e422 = expect(c.Post("/api/runs", json{{"dataset_id", id}, {"pipeline", bad}}.dump(), "application/json"),
                             422, "invalid pipeline");
    if (!e422.is_object() || e422.value("error", "") != "InvalidPipeline" || e422.at("diagnostics").empty())
        problems.push_back("422 body");
    const auto e404 = expect(c.Get("/api/runs/00000000-0000-4000-8000-000000000000"), 404, "unknown job");
    if (!e404.is_object() || !e404.contains("error") || !e404.contains("message")) problems.push_back("404 body");
    const auto e404d = expect(c.Post("/api/runs", json{{"dataset_id", "nope"}, {"pipeline", pipeline}}.dump(),
                                     "application/json"),
                              404, "unknown dataset");
    if (!e404d.is_object() || e404d.value("error", "") != "UnknownDataset") problems.push_back("404 dataset body");

    svc.stop();
    th.join();
    std::string detail = fmt::format("happy path {:.2f} s, no UI assets", happy);
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty() && happy < 5.0, detail};
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"decomposition identity", decomposition_identity},
        {"acf golden values", acf_golden},
        {"nmf monotone and rank-1 recovery", nmf},
        {"iforest", iforest},
        {"scoring", scoring_check},
        {"searcher correctness", searcher},
        {"end-to-end benchmark", end_to_end},
        {"pipeline language", pipeline_language},
        {"service", service_api},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    std::cout << (failed ? fmt::format("{} criteria failed", failed) : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
