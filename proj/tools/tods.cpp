// SPDX-License-Identifier: Apache-2.0
// tods: run, search, list-primitives, serve.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tsods/service.hpp"
#include "tsods/tsods.hpp"

namespace {

using namespace tsods;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitPipeline = 3;

int exit_code(const Error& e) {
    switch (category(e.code())) {
    case ErrorCategory::Usage: return kExitUsage;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Pipeline: return kExitPipeline;
    }
    return kExitPipeline;
}

std::string read_file(const std::string& path, ErrorCode on_failure) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(on_failure, "cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TimeSeriesDataset load_dataset(const std::string& path, long long target_index) {
    if (target_index < 0) throw Error(ErrorCode::BadTargetIndex, "--target-index must be non-negative");
    auto ds = generate_dataset(read_file(path, ErrorCode::EmptyInput), static_cast<std::size_t>(target_index));
    ds.name = path;
    return ds;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("tods");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("TSODS_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

struct RunConfig {
    std::string data, pipeline, metric = "f1", scheme = "kfold:5", report = "text";
    long long target_index = -1;
};

struct SearchConfig {
    std::string data, space, out = "best_pipeline.json", strategy = "random", metric = "f1", scheme = "kfold:5",
                                report = "text";
    long long target_index = -1;
    long long budget = 20;
    std::uint64_t seed = 42;
    std::size_t workers = 0;
};

struct ServeConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    service::ServiceOptions options;
    std::size_t max_upload_mb = 50;
};

std::string fmt_score(double v) { return fmt::format("{:.4f}", v); }

int cmd_run(const RunConfig& cfg) {
    const auto ds = load_dataset(cfg.data, cfg.target_index);
    const auto pipeline = parse_pipeline(read_file(cfg.pipeline, ErrorCode::MalformedPipeline));
    const auto metric = parse_metric(cfg.metric);
    const auto scheme = SplitScheme::parse(cfg.scheme);
    spdlog::info("evaluating pipeline {} on {} rows", pipeline.id, ds.size());
    const auto ev = evaluate_pipeline(ds, pipeline, metric, scheme);

    if (cfg.report == "json") {
        auto j = to_json(ev);
        j["pipeline_id"] = pipeline.id;
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }
    std::cout << fmt::format("pipeline {} ({} steps), {} rows, scheme {}\n", pipeline.id, pipeline.steps.size(),
                             ds.size(), scheme.str());
    std::cout << fmt::format("{:<6}{:>11}{:>11}{:>11}{:>11}{:>7}{:>7}{:>7}\n", "fold", "precision", "recall", "f1",
                             "f1_pa", "tp", "fp", "fn");
    for (std::size_t i = 0; i < ev.folds.size(); ++i) {
        const auto& f = ev.folds[i];
        std::cout << fmt::format("{:<6}{:>11}{:>11}{:>11}{:>11}{:>7}{:>7}{:>7}\n", i, fmt_score(f.precision),
                                 fmt_score(f.recall), fmt_score(f.f1), fmt_score(f.f1_pa), f.tp, f.fp, f.fn);
    }
    const auto m = mean_report(ev.folds);
    std::cout << fmt::format("{:<6}{:>11}{:>11}{:>11}{:>11}{:>7}{:>7}{:>7}\n", "mean", fmt_score(m.precision),
                             fmt_score(m.recall), fmt_score(m.f1), fmt_score(m.f1_pa), m.tp, m.fp, m.fn);
    std::cout << fmt::format("aggregate {} = {:.6f}\n", to_string(metric), ev.aggregate);
    return kExitOk;
}

std::string short_id(const std::string& primitive_id) {
    const auto dot = primitive_id.rfind('.');
    return dot == std::string::npos ? primitive_id : primitive_id.substr(dot + 1);
}

int cmd_search(const SearchConfig& cfg) {
    if (cfg.budget <= 0) throw Error(ErrorCode::BudgetZero, "--budget must be at least 1");
    const auto ds = load_dataset(cfg.data, cfg.target_index);
    const auto space = cfg.space.empty() ? default_search_space()
                                         : parse_search_space(read_file(cfg.space, ErrorCode::InvalidSearchSpace));
    SearchOptions opt;
    opt.strategy = parse_strategy(cfg.strategy);
    opt.budget = static_cast<std::size_t>(cfg.budget);
    opt.seed = cfg.seed;
    opt.metric = parse_metric(cfg.metric);
    opt.scheme = SplitScheme::parse(cfg.scheme);
    opt.workers = cfg.workers;
    spdlog::info("searching {} of {} candidates", std::min(opt.budget, space.size()), space.size());
    const auto result = search(ds, space, opt);

    const auto& best = result.best();
    if (best.ok) {
        std::ofstream out(cfg.out, std::ios::binary);
        if (!out) throw Error(ErrorCode::EmptyInput, "cannot write '" + cfg.out + "'");
        out << export_best(best);
    }

    if (cfg.report == "json") {
        auto j = to_json(result);
        j["out"] = best.ok ? json(cfg.out) : json(nullptr);
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << fmt::format("{} of {} candidates evaluated ({} {})\n", result.evaluations, result.space_size,
                                 cfg.strategy, opt.scheme.str());
        std::cout << fmt::format("{:<5}{:>8}{:>10}  {}\n", "rank", "ordinal", to_string(opt.metric), "steps");
        for (const auto& r : result.leaderboard) {
            std::string steps;
            for (const auto& s : r.pipeline.steps) steps += (steps.empty() ? "" : " > ") + short_id(s.primitive_id);
            std::cout << fmt::format("{:<5}{:>8}{:>10}  {}{}\n", r.rank, r.ordinal,
                                     r.ok ? fmt_score(r.aggregate) : std::string("failed"), steps,
                                     r.ok ? "" : "  (" + r.error + ")");
        }
        if (best.ok) std::cout << "best pipeline written to " << cfg.out << "\n";
    }
    if (!best.ok) throw Error(ErrorCode::FailedCandidate, "every candidate failed; nothing written");
    return kExitOk;
}

int cmd_list_primitives(const std::string& report) {
    const auto list = registry_list();
    if (report == "json") {
        json arr = json::array();
        for (const auto& d : list) arr.push_back(to_json(d));
        std::cout << arr.dump(2) << "\n";
        return kExitOk;
    }
    std::cout << fmt::format("{:<22}{:<50}{}\n", "family", "id", "hyperparameters");
    for (const auto& d : list) {
        std::string hps;
        for (const auto& [name, spec] : d.hyperparams)
            hps += (hps.empty() ? "" : ", ") + name + "=" + hp::to_json(spec.default_value).dump();
        std::cout << fmt::format("{:<22}{:<50}{}\n", to_string(d.family), d.id, hps);
    }
    return kExitOk;
}

int cmd_serve(ServeConfig cfg) {
    cfg.options.max_upload_bytes = cfg.max_upload_mb * 1024u * 1024u;
    service::Service svc(cfg.options);
    spdlog::set_level(std::min(spdlog::get_level(), spdlog::level::info));
    spdlog::info("listening on http://{}:{}", cfg.host, cfg.port);
    if (!svc.listen(cfg.host, cfg.port)) {
        spdlog::error("cannot listen on {}:{}", cfg.host, cfg.port);
        return kExitUsage;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Time-series outlier detection pipelines"};
    app.require_subcommand(1);

    RunConfig run;
    auto* run_cmd = app.add_subcommand("run", "Evaluate a pipeline on a labelled CSV");
    run_cmd->add_option("--data", run.data, "CSV file")->required();
    run_cmd->add_option("--target-index", run.target_index, "column holding 0/1 labels")->required();
    run_cmd->add_option("--pipeline", run.pipeline, "pipeline JSON file")->required();
    run_cmd->add_option("--metric", run.metric, "precision | recall | f1 | f1_pa")->capture_default_str();
    run_cmd->add_option("--scheme", run.scheme, "kfold:K or holdout:F")->capture_default_str();
    run_cmd->add_option("--report", run.report, "text | json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

    SearchConfig sc;
    auto* search_cmd = app.add_subcommand("search", "Search a pipeline space and export the best pipeline");
    search_cmd->add_option("--data", sc.data, "CSV file")->required();
    search_cmd->add_option("--target-index", sc.target_index, "column holding 0/1 labels")->required();
    search_cmd->add_option("--space", sc.space, "search-space JSON (default: built-in space)");
    search_cmd->add_option("--budget", sc.budget, "maximum evaluations")->capture_default_str();
    search_cmd->add_option("--seed", sc.seed, "sampling seed")->capture_default_str();
    search_cmd->add_option("--out", sc.out, "where to write the best pipeline")->capture_default_str();
    search_cmd->add_option("--strategy", sc.strategy, "random | exhaustive")
        ->check(CLI::IsMember({"random", "exhaustive"}))
        ->capture_default_str();
    search_cmd->add_option("--metric", sc.metric, "precision | recall | f1 | f1_pa")->capture_default_str();
    search_cmd->add_option("--scheme", sc.scheme, "kfold:K or holdout:F")->capture_default_str();
    search_cmd->add_option("--workers", sc.workers, "parallel evaluations (0: all cores)")->capture_default_str();
    search_cmd->add_option("--report", sc.report, "text | json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

    std::string list_report = "text";
    auto* list_cmd = app.add_subcommand("list-primitives", "List registered primitives");
    list_cmd->add_option("--report", list_report, "text | json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

    ServeConfig serve;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
    serve_cmd->add_option("--host", serve.host)->capture_default_str();
    serve_cmd->add_option("--port", serve.port)->capture_default_str();
    serve_cmd->add_option("--workers", serve.options.workers, "job workers (0: all cores)")->capture_default_str();
    serve_cmd->add_option("--cors-origin", serve.options.cors_origin, "allowed browser origin");
    serve_cmd->add_option("--ui-dir", serve.options.ui_dir, "static UI files served at /");
    serve_cmd->add_option("--persist", serve.options.persist_dir, "snapshot directory for datasets and jobs");
    serve_cmd->add_option("--max-upload-mb", serve.max_upload_mb)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*search_cmd) return cmd_search(sc);
        if (*list_cmd) return cmd_list_primitives(list_report);
        if (*serve_cmd) return cmd_serve(serve);
    } catch (const Error& e) {
        std::cerr << "tods: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "tods: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitUsage;
}
