#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "eegline/errors.hpp"
#include "eegline/formats.hpp"
#include "eegline/hyperopt.hpp"
#include "eegline/pipeline.hpp"

namespace eegline::service {

using json = nlohmann::json;

enum class JobState { Queued, Running, Done, Failed };

inline const char* job_state_name(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

struct JobStatus {
  std::string id;
  JobState state = JobState::Queued;
  std::uint64_t completed = 0;
  std::uint64_t budget = 0;
  std::string error;
  std::string ledger_path;
};

inline json job_to_json(const JobStatus& j) {
  json out = {{"job_id", j.id},
              {"state", job_state_name(j.state)},
              {"progress", {{"completed", j.completed}, {"budget", j.budget}}}};
  if (!j.error.empty()) out["error"] = j.error;
  return out;
}

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;                // 0 = pick any free port
  std::string model_path;        // checkpoint served by /v1/classify
  std::string cache_path;        // optional: enables /v1/search
  std::string manifest_path;     // optional: split for search jobs
  std::string work_dir = ".";    // job ledgers live here
  std::size_t max_body_bytes = 32ull * 1024 * 1024;
  int search_epochs = 30;
  int search_batch = 64;
};

// One search job at a time; classify requests run concurrently against the
// immutable checkpoint.
class Service {
 public:
  explicit Service(ServiceConfig config) : config_(std::move(config)) {
    if (!config_.model_path.empty()) {
      model_ = io::load_checkpoint(config_.model_path);
      model_id_ = io::model_id_of(config_.model_path);
    }
    if (!config_.cache_path.empty()) {
      io::FeatureCache cache = io::load_cache(config_.cache_path);
      const edf::DatasetManifest* manifest_ptr = nullptr;
      edf::DatasetManifest manifest;
      if (!config_.manifest_path.empty()) {
        manifest = io::load_manifest(config_.manifest_path);
        manifest_ptr = &manifest;
      }
      split_ = pipeline::split_dataset(cache, manifest_ptr);
      has_data_ = split_.train.size() > 0 && split_.test.size() > 0;
    }
    install_routes();
  }

  ~Service() { stop(); }

  // Binds; returns the actual port.
  int start() {
    if (config_.port == 0) {
      const int port = server_.bind_to_any_port(config_.host);
      if (port <= 0) fail(errc::io_error, "cannot bind " + config_.host);
      bound_port_ = port;
    } else {
      if (!server_.bind_to_port(config_.host, config_.port))
        fail(errc::io_error, "cannot bind " + config_.host + ":" +
                                 std::to_string(config_.port));
      bound_port_ = config_.port;
    }
    worker_ = std::thread([this] { work_loop(); });
    return bound_port_;
  }

  // Blocks serving requests until stop().
  bool run() { return server_.listen_after_bind(); }

  void stop() {
    server_.stop();
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  int port() const { return bound_port_; }

 private:
  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void install_routes() {
    server_.set_payload_max_length(config_.max_body_bytes);

    server_.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}});
    });

    server_.Post("/v1/classify", [this](const httplib::Request& req,
                                        httplib::Response& res) {
      handle_classify(req, res);
    });

    server_.Post("/v1/search", [this](const httplib::Request& req,
                                      httplib::Response& res) {
      handle_search_submit(req, res);
    });

    server_.Get(R"(/v1/search/([^/]+)/leaderboard)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  handle_leaderboard(req, res);
                });

    server_.Get(R"(/v1/search/([^/]+))", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      handle_status(req, res);
    });
  }

  void handle_classify(const httplib::Request& req, httplib::Response& res) {
    if (!model_.has_value()) {
      reply(res, 503, {{"error", "no-model"}});
      return;
    }
    if (!req.has_param("run")) {
      reply(res, 400, {{"error", "MissingRun"},
                       {"detail", "query parameter 'run' is required"}});
      return;
    }
    int run = 0;
    try {
      run = std::stoi(req.get_param_value("run"));
    } catch (const std::exception&) {
      reply(res, 400, {{"error", "MissingRun"}, {"detail", "run must be an integer"}});
      return;
    }
    try {
      const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
      edf::RawRecording rec = edf::parse_edf(bytes);
      if (edf::classify_run(run) == edf::TaskKind::Baseline) {
        reply(res, 422, {{"error", "baseline-run"},
                         {"detail", "run " + std::to_string(run) +
                                        " carries no movement events"}});
        return;
      }
      rec.run = run;
      rec.subject = "upload";
      const edf::SubjectVerdict verdict = edf::validate_subject({rec});
      if (!verdict.accepted) {
        reply(res, 422, {{"error", "validation-failed"},
                         {"reason", verdict.reason}});
        return;
      }
      const std::vector<edf::Trial> trials = edf::segment_trials(rec);
      const pipeline::ClassificationReport report =
          pipeline::classify_trials(*model_, trials, model_id_);
      reply(res, 200, pipeline::classification_to_json(report));
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.name()}, {"detail", e.what()}});
    }
  }

  void handle_search_submit(const httplib::Request& req,
                            httplib::Response& res) {
    if (!has_data_) {
      reply(res, 503, {{"error", "no-dataset"},
                       {"detail", "server started without a feature cache"}});
      return;
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", "BadRequest"}, {"detail", e.what()}});
      return;
    }
    try {
      JobStatus job;
      job.id = body.value("id", "");
      if (job.id.empty()) {
        reply(res, 400, {{"error", "BadRequest"}, {"detail", "missing job id"}});
        return;
      }
      job.budget = body.value("budget", 10ull);
      const std::uint64_t seed = body.value("seed", 1ull);
      hyper::SearchSpace space = body.contains("space")
                                     ? hyper::space_from_json(body["space"])
                                     : hyper::SearchSpace{};
      if (job.budget < 1) {
        reply(res, 400, {{"error", "BadRequest"}, {"detail", "budget must be >= 1"}});
        return;
      }
      job.ledger_path =
          (std::filesystem::path(config_.work_dir) / (job.id + ".ndjson"))
              .string();
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (jobs_.count(job.id)) {
          reply(res, 409, {{"error", "duplicate-job"}, {"job_id", job.id}});
          return;
        }
        jobs_[job.id] = job;
        queue_.push_back({job.id, space, job.budget, seed});
      }
      cv_.notify_one();
      reply(res, 202, {{"job_id", job.id}, {"state", "queued"}});
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.name()}, {"detail", e.what()}});
    }
  }

  void handle_status(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = jobs_.find(req.matches[1].str());
    if (it == jobs_.end()) {
      reply(res, 404, {{"error", "unknown-job"}});
      return;
    }
    reply(res, 200, job_to_json(it->second));
  }

  void handle_leaderboard(const httplib::Request& req, httplib::Response& res) {
    std::string ledger_path;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = jobs_.find(req.matches[1].str());
      if (it == jobs_.end()) {
        reply(res, 404, {{"error", "unknown-job"}});
        return;
      }
      ledger_path = it->second.ledger_path;
    }
    std::size_t top = 5;
    if (req.has_param("top")) top = std::stoul(req.get_param_value("top"));
    hyper::Ledger ledger;
    ledger.records = hyper::read_ledger_records(ledger_path);
    json rows = json::array();
    if (!ledger.records.empty()) {
      for (const hyper::LeaderboardRow& row : hyper::leaderboard(ledger, top)) {
        rows.push_back({{"rank", row.rank},
                        {"hidden_layers", row.hidden_layers},
                        {"config", row.rendering},
                        {"accuracy", row.accuracy},
                        {"iteration", row.iteration}});
      }
    }
    reply(res, 200, {{"job_id", req.matches[1].str()}, {"rows", rows}});
  }

  struct PendingJob {
    std::string id;
    hyper::SearchSpace space;
    std::uint64_t budget = 0;
    std::uint64_t seed = 0;
  };

  void work_loop() {
    for (;;) {
      PendingJob pending;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (stopping_ && queue_.empty()) return;
        pending = queue_.front();
        queue_.pop_front();
        jobs_[pending.id].state = JobState::Running;
      }
      hyper::RunOptions options;
      options.epochs = config_.search_epochs;
      options.batch_size = config_.search_batch;
      options.on_record = [this, id = pending.id](std::uint64_t completed,
                                                  std::uint64_t) {
        std::lock_guard<std::mutex> lock(mu_);
        jobs_[id].completed = completed;
      };
      std::string ledger_path;
      {
        std::lock_guard<std::mutex> lock(mu_);
        ledger_path = jobs_[pending.id].ledger_path;
      }
      try {
        hyper::run_search(pending.space, split_.train, split_.test,
                          pending.budget, pending.seed, ledger_path, options);
        std::lock_guard<std::mutex> lock(mu_);
        jobs_[pending.id].state = JobState::Done;
        jobs_[pending.id].completed = pending.budget;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu_);
        jobs_[pending.id].state = JobState::Failed;
        jobs_[pending.id].error = e.what();
      }
    }
  }

  ServiceConfig config_;
  httplib::Server server_;
  int bound_port_ = 0;
  std::optional<nn::Model> model_;
  std::string model_id_;
  pipeline::Split split_;
  bool has_data_ = false;

  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::map<std::string, JobStatus> jobs_;
  std::deque<PendingJob> queue_;
  std::thread worker_;
};

}  // namespace eegline::service
