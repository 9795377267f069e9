// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tsods/dataset.hpp"
#include "tsods/engine.hpp"
#include "tsods/search.hpp"

namespace tsods::service {

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    return fmt::format("{}.{:03}Z", buf, ms);
}

/// Random version-4 UUIDs for jobs and datasets.
class IdSource {
public:
    IdSource() : rng_(std::random_device{}() ^ static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())) {}

    std::string next() {
        std::lock_guard lock(mu_);
        const std::uint64_t a = (rng_.next_u64() & 0xFFFFFFFFFFFF0FFFULL) | 0x4000ULL;
        const std::uint64_t b = (rng_.next_u64() & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;
        char buf[40];
        std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(a >> 32),
                      static_cast<unsigned>((a >> 16) & 0xFFFF), static_cast<unsigned>(a & 0xFFFF),
                      static_cast<unsigned>(b >> 48), static_cast<unsigned long long>(b & 0xFFFFFFFFFFFFULL));
        return buf;
    }

private:
    std::mutex mu_;
    Rng rng_;
};

enum class JobKind { Run, Search };
enum class JobStatus { Queued, Running, Succeeded, Failed };

constexpr std::string_view to_string(JobKind k) noexcept { return k == JobKind::Run ? "run" : "search"; }

constexpr std::string_view to_string(JobStatus s) noexcept {
    switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Succeeded: return "succeeded";
    case JobStatus::Failed: return "failed";
    }
    return "";
}

struct Job {
    std::string id;
    JobKind kind = JobKind::Run;
    JobStatus status = JobStatus::Queued;
    std::string dataset_id;
    std::string submitted_at;
    std::string started_at;
    std::string finished_at;
    json result;      ///< null unless succeeded
    json error;       ///< null unless failed
    json plot;        ///< run jobs: per-point scores for plotting
};

inline json to_json(const Job& j) {
    return json{{"id", j.id},
                {"kind", to_string(j.kind)},
                {"status", to_string(j.status)},
                {"dataset_id", j.dataset_id},
                {"submitted_at", j.submitted_at},
                {"started_at", j.started_at.empty() ? json(nullptr) : json(j.started_at)},
                {"finished_at", j.finished_at.empty() ? json(nullptr) : json(j.finished_at)},
                {"result", j.result},
                {"error", j.error}};
}

/// Synchronized job map. Status only moves queued -> running -> terminal and
/// a terminal job is never modified again.
class JobStore {
public:
    void add(Job job) {
        std::lock_guard lock(mu_);
        order_.push_back(job.id);
        jobs_.emplace(job.id, std::move(job));
    }

    std::optional<Job> get(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) return std::nullopt;
        return it->second;
    }

    bool start(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end() || it->second.status != JobStatus::Queued) return false;
        it->second.status = JobStatus::Running;
        it->second.started_at = utc_now();
        return true;
    }

    bool succeed(const std::string& id, json result, json plot = nullptr) {
        return finish(id, JobStatus::Succeeded, [&](Job& j) {
            j.result = std::move(result);
            j.plot = std::move(plot);
        });
    }

    bool fail(const std::string& id, json error) {
        return finish(id, JobStatus::Failed, [&](Job& j) { j.error = std::move(error); });
    }

    std::vector<Job> all() const {
        std::lock_guard lock(mu_);
        std::vector<Job> out;
        for (const auto& id : order_) out.push_back(jobs_.at(id));
        return out;
    }

private:
    bool finish(const std::string& id, JobStatus status, const std::function<void(Job&)>& fill) {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end() || it->second.status != JobStatus::Running) return false;
        fill(it->second);
        it->second.status = status;
        it->second.finished_at = utc_now();
        return true;
    }

    mutable std::mutex mu_;
    std::map<std::string, Job> jobs_;
    std::vector<std::string> order_;
};

/// Fixed-size FIFO pool. The destructor drains queued tasks and joins.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t workers) {
        if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
        for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
    }

    ~WorkerPool() {
        {
            std::lock_guard lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    void submit(std::function<void()> task) {
        {
            std::lock_guard lock(mu_);
            queue_.push_back(std::move(task));
        }
        cv_.notify_one();
    }

    std::size_t size() const noexcept { return threads_.size(); }

private:
    void loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (queue_.empty()) return;
                task = std::move(queue_.front());
                queue_.pop_front();
            }
            task();
        }
    }

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> queue_;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

struct DatasetEntry {
    std::string id;
    std::shared_ptr<const TimeSeriesDataset> data;
    std::optional<std::size_t> target_index;
};

inline json handle_json(const DatasetEntry& e) {
    return json{{"id", e.id},
                {"name", e.data->name},
                {"n", e.data->size()},
                {"features", e.data->feature_names},
                {"has_labels", e.data->has_labels()}};
}

struct ServiceOptions {
    std::size_t workers = 0;
    std::string cors_origin;
    std::string ui_dir;
    std::string persist_dir;
    std::size_t max_upload_bytes = 50u * 1024u * 1024u;
};

class Service {
public:
    explicit Service(ServiceOptions opt = {}) : opt_(std::move(opt)), pool_(std::make_unique<WorkerPool>(opt_.workers)) {
        load_snapshot();
        routes();
    }

    ~Service() {
        stop();
        pool_.reset();
        save_snapshot();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    httplib::Server& server() { return server_; }

    /// Binds to an ephemeral port and returns it (or -1).
    int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    void stop() {
        if (server_.is_running()) server_.stop();
    }
    void wait_until_ready() { server_.wait_until_ready(); }

    const JobStore& jobs() const { return jobs_; }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void reply(Res& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static json error_body(std::string_view name, const std::string& message) {
        return json{{"error", name}, {"message", message}};
    }

    std::shared_ptr<const TimeSeriesDataset> dataset(const std::string& id) const {
        std::lock_guard lock(datasets_mu_);
        auto it = datasets_.find(id);
        return it == datasets_.end() ? nullptr : it->second.data;
    }

    void routes() {
        server_.set_payload_max_length(opt_.max_upload_bytes);
        server_.set_logger([](const Req& req, const Res& res) {
            spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
        });
        server_.set_exception_handler([](const Req&, Res& res, std::exception_ptr ep) {
            std::string msg = "unknown error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                msg = e.what();
            } catch (...) {
            }
            spdlog::error("unhandled exception: {}", msg);
            reply(res, 500, error_body("InternalError", msg));
        });
        server_.set_error_handler([](const Req&, Res& res) {
            if (res.body.empty()) {
                const auto name = res.status == 413 ? "PayloadTooLarge" : res.status == 404 ? "NotFound" : "HttpError";
                reply(res, res.status, error_body(name, httplib::status_message(res.status)));
            }
        });

        if (!opt_.cors_origin.empty()) {
            server_.set_default_headers({{"Access-Control-Allow-Origin", opt_.cors_origin},
                                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                         {"Access-Control-Allow-Headers", "Content-Type"}});
            server_.Options(R"(/api/.*)", [](const Req&, Res& res) { res.status = 204; });
        }
        if (!opt_.ui_dir.empty() && !server_.set_mount_point("/", opt_.ui_dir))
            spdlog::warn("--ui-dir {} is not a directory; static UI disabled", opt_.ui_dir);

        server_.Get("/api/primitives", [](const Req&, Res& res) {
            json families = json::object();
            for (auto f : kAllFamilies) families[std::string(to_string(f))] = json::array();
            for (const auto& d : registry_list()) families[std::string(to_string(d.family))].push_back(to_json(d));
            reply(res, 200, json{{"families", families}, {"count", registry().size()}});
        });

        server_.Post("/api/datasets", [this](const Req& req, Res& res) { upload(req, res); });
        server_.Get(R"(/api/datasets/([0-9a-f-]+))", [this](const Req& req, Res& res) {
            std::lock_guard lock(datasets_mu_);
            auto it = datasets_.find(req.matches[1]);
            if (it == datasets_.end()) return reply(res, 404, error_body("UnknownDataset", "no dataset " + req.matches[1].str()));
            reply(res, 200, handle_json(it->second));
        });

        server_.Post("/api/pipelines/validate", [](const Req& req, Res& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::parse_error& e) {
                return reply(res, 400, error_body("MalformedJson", e.what()));
            }
            reply(res, 200, json{{"diagnostics", diagnostics_for(body)}});
        });

        server_.Post("/api/runs", [this](const Req& req, Res& res) { submit_run(req, res); });
        server_.Post("/api/search", [this](const Req& req, Res& res) { submit_search(req, res); });

        server_.Get(R"(/api/runs/([0-9a-f-]+))", [this](const Req& req, Res& res) { get_job(req, res, JobKind::Run); });
        server_.Get(R"(/api/search/([0-9a-f-]+))", [this](const Req& req, Res& res) { get_job(req, res, JobKind::Search); });
        server_.Get(R"(/api/jobs/([0-9a-f-]+))", [this](const Req& req, Res& res) { get_job(req, res, std::nullopt); });
        server_.Get(R"(/api/runs/([0-9a-f-]+)/scores)", [this](const Req& req, Res& res) {
            auto job = jobs_.get(req.matches[1]);
            if (!job || job->kind != JobKind::Run) return reply(res, 404, error_body("UnknownJob", "no run " + req.matches[1].str()));
            if (job->status != JobStatus::Succeeded)
                return reply(res, 409, error_body("JobNotFinished", "run is " + std::string(to_string(job->status))));
            reply(res, 200, job->plot);
        });
    }

    /// Parse errors become a single diagnostic; otherwise validate()'s list.
    static json diagnostics_for(const json& body) {
        json out = json::array();
        try {
            const auto p = parse_pipeline(body);
            for (const auto& d : validate(p)) out.push_back(to_json(d));
        } catch (const Error& e) {
            out.push_back(to_json(diagnostic_from_error(e)));
        }
        return out;
    }

    void upload(const Req& req, Res& res) {
        std::string text, name = "upload";
        std::string target;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("file")) return reply(res, 400, error_body("EmptyInput", "multipart field 'file' is missing"));
            const auto file = req.get_file_value("file");
            text = file.content;
            if (!file.filename.empty()) name = file.filename;
            if (req.has_file("target_index")) target = req.get_file_value("target_index").content;
        } else {
            text = req.body;
            if (req.has_param("name")) name = req.get_param_value("name");
        }
        if (req.has_param("target_index")) target = req.get_param_value("target_index");

        std::optional<std::size_t> target_index;
        target = std::string(csv::trim(target));
        if (!target.empty()) {
            long long v = -1;
            const auto [ptr, ec] = std::from_chars(target.data(), target.data() + target.size(), v);
            if (ec != std::errc() || ptr != target.data() + target.size() || v < 0)
                return reply(res, 400, error_body("BadTargetIndex", "target_index must be a non-negative integer"));
            target_index = static_cast<std::size_t>(v);
        }
        try {
            auto ds = generate_dataset(text, target_index);
            ds.name = name;
            DatasetEntry entry{ids_.next(), std::make_shared<const TimeSeriesDataset>(std::move(ds)), target_index};
            const json handle = handle_json(entry);
            {
                std::lock_guard lock(datasets_mu_);
                datasets_.emplace(entry.id, std::move(entry));
            }
            spdlog::info("dataset {} uploaded ({} rows)", handle["id"].get<std::string>(), handle["n"].get<std::size_t>());
            reply(res, 201, handle);
        } catch (const Error& e) {
            reply(res, 400, error_body(e.name(), e.what()));
        }
    }

    static std::optional<json> request_json(const Req& req, Res& res) {
        try {
            auto body = json::parse(req.body);
            if (!body.is_object()) {
                reply(res, 400, error_body("MalformedJson", "request body must be a JSON object"));
                return std::nullopt;
            }
            return body;
        } catch (const json::parse_error& e) {
            reply(res, 400, error_body("MalformedJson", e.what()));
            return std::nullopt;
        }
    }

    std::shared_ptr<const TimeSeriesDataset> request_dataset(const json& body, Res& res) const {
        const std::string id = body.contains("dataset_id") && body["dataset_id"].is_string() ? body["dataset_id"].get<std::string>() : "";
        auto ds = dataset(id);
        if (!ds) reply(res, 404, error_body("UnknownDataset", "no dataset '" + id + "'"));
        return ds;
    }

    Job new_job(JobKind kind, const std::string& dataset_id) {
        Job job;
        job.id = ids_.next();
        job.kind = kind;
        job.dataset_id = dataset_id;
        job.submitted_at = utc_now();
        return job;
    }

    void submit_run(const Req& req, Res& res) {
        auto body = request_json(req, res);
        if (!body) return;
        auto ds = request_dataset(*body, res);
        if (!ds) return;
        if (!body->contains("pipeline"))
            return reply(res, 422, json{{"error", "InvalidPipeline"}, {"diagnostics", json::array({{{"step", nullptr}, {"code", "MalformedPipeline"}, {"message", "request has no 'pipeline'"}}})}});
        const json diags = diagnostics_for((*body)["pipeline"]);
        if (!diags.empty()) return reply(res, 422, json{{"error", "InvalidPipeline"}, {"diagnostics", diags}});

        Metric metric = Metric::F1;
        SplitScheme scheme = SplitScheme::kfold(5);
        try {
            metric = parse_metric(body->value("metric", "f1"));
            scheme = SplitScheme::parse(body->value("scheme", "kfold:5"));
        } catch (const Error& e) {
            return reply(res, 400, error_body(e.name(), e.what()));
        }
        const auto pipeline = parse_pipeline((*body)["pipeline"]);

        Job job = new_job(JobKind::Run, (*body)["dataset_id"].get<std::string>());
        const std::string id = job.id;
        jobs_.add(std::move(job));
        pool_->submit([this, id, ds, pipeline, metric, scheme] { run_job(id, *ds, pipeline, metric, scheme); });
        spdlog::info("run job {} queued", id);
        reply(res, 202, json{{"job_id", id}});
    }

    void run_job(const std::string& id, const TimeSeriesDataset& ds, const PipelineDescription& p, Metric metric,
                 const SplitScheme& scheme) {
        if (!jobs_.start(id)) return;
        try {
            // Full-series pass for the trace and the plotted score curve.
            const auto full = execute(p, ds);
            json plot{{"timestamps", ds.timestamps},
                      {"scores", full.kind == DataKind::Scores ? full.scores : full.final_scores},
                      {"labels", full.kind == DataKind::Labels ? json(full.labels) : json(nullptr)},
                      {"truth", ds.has_labels() ? json(*ds.labels) : json(nullptr)}};
            json result{{"trace", to_json(full.trace)}, {"pipeline_id", p.id}};
            if (ds.has_labels() && full.kind == DataKind::Labels) {
                const auto ev = evaluate_pipeline(ds, p, metric, scheme);
                result.update(to_json(ev));
            } else {
                result["scores"] = nullptr;
                result["note"] = ds.has_labels() ? "pipeline outputs Scores; no labels to score"
                                                 : "dataset has no target labels; nothing to score";
            }
            jobs_.succeed(id, std::move(result), std::move(plot));
            spdlog::info("run job {} succeeded", id);
        } catch (const StepFailed& e) {
            jobs_.fail(id, json{{"error", e.name()}, {"cause", to_string(e.cause())}, {"message", e.what()},
                                {"step", *e.step()}, {"trace", to_json(e.trace())}});
            spdlog::warn("run job {} failed: {}", id, e.what());
        } catch (const Error& e) {
            jobs_.fail(id, json{{"error", e.name()}, {"message", e.what()},
                                {"step", e.step() ? json(*e.step()) : json(nullptr)}});
            spdlog::warn("run job {} failed: {}", id, e.what());
        } catch (const std::exception& e) {
            jobs_.fail(id, json{{"error", "InternalError"}, {"message", e.what()}, {"step", nullptr}});
        }
    }

    void submit_search(const Req& req, Res& res) {
        auto body = request_json(req, res);
        if (!body) return;
        auto ds = request_dataset(*body, res);
        if (!ds) return;

        SearchOptions opt;
        SearchSpace space;
        try {
            const auto& b = *body;
            if (b.contains("budget")) {
                if (!b["budget"].is_number_integer() || b["budget"].get<long long>() < 0)
                    throw Error(ErrorCode::BudgetZero, "budget must be a positive integer");
                opt.budget = b["budget"].get<std::size_t>();
            }
            if (opt.budget == 0) throw Error(ErrorCode::BudgetZero, "search budget must be at least 1");
            if (b.contains("seed")) opt.seed = b["seed"].get<std::uint64_t>();
            opt.strategy = parse_strategy(b.value("strategy", "random"));
            opt.metric = parse_metric(b.value("metric", "f1"));
            opt.scheme = SplitScheme::parse(b.value("scheme", "kfold:5"));
            opt.workers = 1;
            space = b.contains("space") && !b["space"].is_null() ? parse_search_space(b["space"]) : default_search_space();
            if (!ds->has_labels()) throw Error(ErrorCode::NoLabels, "search needs a dataset with target labels");
        } catch (const Error& e) {
            return reply(res, 422, error_body(e.name(), e.what()));
        } catch (const json::exception& e) {
            return reply(res, 422, error_body("MalformedJson", e.what()));
        }

        Job job = new_job(JobKind::Search, (*body)["dataset_id"].get<std::string>());
        const std::string id = job.id;
        jobs_.add(std::move(job));
        pool_->submit([this, id, ds, space, opt] {
            if (!jobs_.start(id)) return;
            try {
                jobs_.succeed(id, to_json(search(*ds, space, opt)));
                spdlog::info("search job {} succeeded", id);
            } catch (const Error& e) {
                jobs_.fail(id, json{{"error", e.name()}, {"message", e.what()}});
            } catch (const std::exception& e) {
                jobs_.fail(id, json{{"error", "InternalError"}, {"message", e.what()}});
            }
        });
        spdlog::info("search job {} queued", id);
        reply(res, 202, json{{"job_id", id}});
    }

    void get_job(const Req& req, Res& res, std::optional<JobKind> kind) {
        auto job = jobs_.get(req.matches[1]);
        if (!job || (kind && job->kind != *kind))
            return reply(res, 404, error_body("UnknownJob", "no job " + req.matches[1].str()));
        reply(res, 200, to_json(*job));
    }

    // --- persistence ----------------------------------------------------------

    void save_snapshot() const {
        if (opt_.persist_dir.empty()) return;
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(fs::path(opt_.persist_dir) / "datasets", ec);
        json index = json::array();
        {
            std::lock_guard lock(datasets_mu_);
            for (const auto& [id, e] : datasets_) {
                std::ofstream(fs::path(opt_.persist_dir) / "datasets" / (id + ".csv")) << to_csv(*e.data);
                index.push_back({{"id", id}, {"name", e.data->name}, {"has_labels", e.data->has_labels()}});
            }
        }
        json jobs = json::array();
        for (const auto& j : jobs_.all())
            if (j.status == JobStatus::Succeeded || j.status == JobStatus::Failed) {
                auto jj = to_json(j);
                jj["plot"] = j.plot;
                jobs.push_back(std::move(jj));
            }
        std::ofstream(fs::path(opt_.persist_dir) / "datasets.json") << index.dump(2);
        std::ofstream(fs::path(opt_.persist_dir) / "jobs.json") << jobs.dump(2);
        spdlog::info("snapshot written to {}", opt_.persist_dir);
    }

    void load_snapshot() {
        if (opt_.persist_dir.empty()) return;
        namespace fs = std::filesystem;
        const fs::path dir(opt_.persist_dir);
        try {
            if (std::ifstream in{dir / "datasets.json"}; in) {
                for (const auto& e : json::parse(in)) {
                    const std::string id = e.at("id");
                    std::ifstream csv_in(dir / "datasets" / (id + ".csv"));
                    std::stringstream text;
                    text << csv_in.rdbuf();
                    const auto header = csv::parse_records(text.str());
                    std::optional<std::size_t> target;
                    if (e.value("has_labels", false) && !header.empty()) target = header.front().size() - 1;
                    auto ds = generate_dataset(text.str(), target);
                    ds.name = e.value("name", id);
                    datasets_.emplace(id, DatasetEntry{id, std::make_shared<const TimeSeriesDataset>(std::move(ds)), target});
                }
            }
            if (std::ifstream in{dir / "jobs.json"}; in) {
                for (const auto& j : json::parse(in)) {
                    Job job;
                    job.id = j.at("id");
                    job.kind = j.at("kind") == "run" ? JobKind::Run : JobKind::Search;
                    job.status = j.at("status") == "succeeded" ? JobStatus::Succeeded : JobStatus::Failed;
                    job.dataset_id = j.value("dataset_id", "");
                    job.submitted_at = j.value("submitted_at", "");
                    job.started_at = j["started_at"].is_string() ? j["started_at"].get<std::string>() : "";
                    job.finished_at = j["finished_at"].is_string() ? j["finished_at"].get<std::string>() : "";
                    job.result = j.value("result", json(nullptr));
                    job.error = j.value("error", json(nullptr));
                    job.plot = j.value("plot", json(nullptr));
                    jobs_.add(std::move(job));
                }
            }
        } catch (const std::exception& e) {
            spdlog::warn("ignoring unreadable snapshot in {}: {}", opt_.persist_dir, e.what());
        }
    }

    ServiceOptions opt_;
    httplib::Server server_;
    IdSource ids_;
    JobStore jobs_;
    mutable std::mutex datasets_mu_;
    std::map<std::string, DatasetEntry> datasets_;
    std::unique_ptr<WorkerPool> pool_;
};

} // namespace tsods::service
