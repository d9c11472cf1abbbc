/* Copyright 2026 The pom Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==========================================================================*/

#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pom/models/checkpoint.hpp"
#include "pom/models/gaussian.hpp"
#include "pom/service/config.hpp"
#include "pom/service/store.hpp"
#include "pom/util/log.hpp"
#include "pom/version.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro collides with
// Eigen parameter names.
#include <httplib.h>

namespace pom::service {

/// Name of the built-in analytic prior usable as a checkpoint without training.
inline constexpr const char* kGaussianCheckpoint = "gaussian";

/// Maps a checkpoint reference to a loaded denoiser; throws on failure.
using ModelResolver = std::function<std::shared_ptr<const Denoiser>(const std::string&)>;

inline std::shared_ptr<const Denoiser> resolve_builtin_or_file(const std::string& ref) {
  if (ref == kGaussianCheckpoint) return std::make_shared<AnalyticGaussianDenoiser>(-0.75, 0.25);
  return std::make_shared<ToyDenoiser>(load_model(ref));
}

class Server {
 public:
  explicit Server(ServiceConfig cfg, ModelResolver resolver = resolve_builtin_or_file)
      : cfg_(std::move(cfg)), store_(cfg_.data_dir), resolver_(std::move(resolver)) {
    routes();
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  ~Server() { stop(); }

  /// Requeues interrupted jobs, starts the workers and the listener. Returns
  /// the bound port.
  int start() {
    recover();
    for (int i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { work(); });
    if (cfg_.port == 0) {
      port_ = http_.bind_to_any_port(cfg_.host);
    } else {
      port_ = http_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
    }
    if (port_ < 0) {
      shutdown_workers();
      throw UsageError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    }
    listener_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    running_ = true;
    log::info("listening on " + cfg_.host + ":" + std::to_string(port_) + " with " + std::to_string(cfg_.workers) +
              " workers");
    return port_;
  }

  /// Stops accepting requests and lets in-flight jobs finish. Queued jobs stay
  /// queued on disk for the next start.
  void stop() { shutdown(false); }

  /// Simulates a crash: in-flight jobs are abandoned in the "running" state.
  void abort() { shutdown(true); }

  int port() const { return port_; }
  Store& store() { return store_; }
  const ServiceConfig& config() const { return cfg_; }

 private:
  using json = nlohmann::json;

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  void routes() {
    http_.set_payload_max_length(cfg_.max_upload_bytes);
    http_.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) { cors(req, res); });
    http_.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    http_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"version", kVersion}, {"workers", cfg_.workers}});
    });
    http_.Post("/v1/rolls", [this](const httplib::Request& req, httplib::Response& res) { post_roll(req, res); });
    http_.Get(R"(/v1/rolls/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!store_.roll(id)) return send_error(res, 404, "unknown roll " + id);
      res.set_content(to_string(read_file(store_.roll_dir(id) / "roll.png")), "image/png");
    });
    http_.Post("/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) { post_job(req, res); });
    http_.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::lock_guard lock(job_mu_);
      auto rec = store_.job(id);
      if (!rec) return send_error(res, 404, "unknown job " + id);
      send_json(res, 200, rec->to_json());
    });
    http_.Get(R"(/v1/jobs/([^/]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::optional<JobRecord> rec;
      {
        std::lock_guard lock(job_mu_);
        rec = store_.job(id);
      }
      if (!rec) return send_error(res, 404, "unknown job " + id);
      if (rec->status != JobStatus::done)
        return send_json(res, 409, {{"error", "job is " + status_name(rec->status)}, {"status", status_name(rec->status)}});
      json list = json::array();
      for (const auto& r : rec->results) {
        const std::string base = "/v1/results/" + id + "/" + std::to_string(r.rank);
        list.push_back({{"rank", r.rank},
                        {"score", r.score},
                        {"seed_offset", r.seed_offset},
                        {"png_url", base + ".png"},
                        {"midi_url", base + ".mid"}});
      }
      send_json(res, 200, {{"job_id", id}, {"results", list}});
    });
    http_.Get(R"(/v1/results/([^/]+)/([0-9]+)\.(png|mid))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1], ext = req.matches[3];
      int rank = 0;
      try {
        rank = std::stoi(req.matches[2]);
      } catch (const std::exception&) {
        return send_error(res, 404, "unknown result");
      }
      std::optional<JobRecord> rec;
      {
        std::lock_guard lock(job_mu_);
        rec = store_.job(id);
      }
      if (!rec) return send_error(res, 404, "unknown job " + id);
      if (rec->status != JobStatus::done) return send_error(res, 409, "job is " + status_name(rec->status));
      const auto path = store_.result_path(id, rank, ext);
      if (!fs::exists(path)) return send_error(res, 404, "unknown result rank " + std::to_string(rank));
      res.set_content(to_string(read_file(path)), ext == "png" ? "image/png" : "audio/midi");
    });
    http_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const char* msg = res.status == 413 ? "payload too large" : res.status == 404 ? "not found" : "request failed";
        send_error(res, res.status, msg);
      }
    });
    http_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      log::error(what);
      send_error(res, 500, what);
    });
  }

  static std::string to_string(const std::vector<std::uint8_t>& bytes) { return {bytes.begin(), bytes.end()}; }

  void cors(const httplib::Request& req, httplib::Response& res) const {
    const auto& allowed = cfg_.allowed_origins;
    if (std::find(allowed.begin(), allowed.end(), "*") != allowed.end()) {
      res.set_header("Access-Control-Allow-Origin", "*");
      return;
    }
    const std::string origin = req.get_header_value("Origin");
    if (!origin.empty() && std::find(allowed.begin(), allowed.end(), origin) != allowed.end()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    }
  }

  void post_roll(const httplib::Request& req, httplib::Response& res) {
    std::string type = req.get_header_value("Content-Type");
    type = type.substr(0, type.find(';'));
    SourceKind kind;
    if (type == "audio/midi" || type == "audio/x-midi" || type == "application/x-midi") {
      kind = SourceKind::midi;
    } else if (type == "image/png") {
      kind = SourceKind::png;
    } else {
      return send_error(res, 400, "unsupported content type '" + type + "' (use audio/midi or image/png)");
    }
    const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
    try {
      auto [rec, created] = store_.put_roll({data, req.body.size()}, kind);
      send_json(res, created ? 201 : 200, {{"id", rec.id}, {"width", rec.width}});
    } catch (const DataError& e) {
      send_error(res, 400, e.what());
    }
  }

  std::shared_ptr<const Denoiser> model(const std::string& ref) {
    std::lock_guard lock(model_mu_);
    auto it = models_.find(ref);
    if (it != models_.end()) return it->second;
    auto m = resolver_(ref);
    models_[ref] = m;
    return m;
  }

  void post_job(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("invalid JSON: ") + e.what());
    }
    FieldErrors errors;
    GenerationJob job = job_from_json(body, errors);
    std::string checkpoint = cfg_.default_checkpoint;
    if (body.is_object() && body.contains("checkpoint")) {
      if (body["checkpoint"].is_string())
        checkpoint = body["checkpoint"].get<std::string>();
      else
        errors["checkpoint"] = "must be a string";
    }
    if (!errors.empty()) return send_json(res, 422, {{"errors", errors}});
    if (!store_.roll(job.roll_id)) return send_error(res, 404, "unknown roll " + job.roll_id);
    if (checkpoint.empty()) return send_json(res, 422, {{"errors", {{"checkpoint", "required (no default configured)"}}}});
    std::shared_ptr<const Denoiser> denoiser;
    try {
      denoiser = model(checkpoint);
    } catch (const std::exception& e) {
      return send_json(res, 422, {{"errors", {{"checkpoint", std::string("not loadable: ") + e.what()}}}});
    }
    try {
      frame_job(store_.roll_image(job.roll_id), job.mask, *denoiser);
    } catch (const std::exception& e) {
      return send_json(res, 422, {{"errors", {{"mask", e.what()}}}});
    }

    JobRecord rec;
    rec.id = Store::new_job_id();
    rec.job = std::move(job);
    rec.checkpoint = checkpoint;
    rec.progress_total = rec.job.n_samples;
    rec.created_at = utc_now();
    {
      std::lock_guard lock(job_mu_);
      store_.create_job(rec);
    }
    enqueue(rec.id);
    res.set_header("Location", "/v1/jobs/" + rec.id);
    send_json(res, 202, {{"job_id", rec.id}, {"status", "queued"}});
  }

  void enqueue(const std::string& id) {
    {
      std::lock_guard lock(queue_mu_);
      queue_.push_back(id);
    }
    queue_cv_.notify_one();
  }

  void recover() {
    std::lock_guard lock(job_mu_);
    for (auto& rec : store_.jobs()) {
      if (rec.status == JobStatus::running) {
        log::warn("requeueing interrupted job " + rec.id);
        rec.status = JobStatus::queued;
        rec.progress_done = 0;
        rec.started_at.clear();
        store_.save_job(rec);
      }
      if (rec.status == JobStatus::queued) enqueue(rec.id);
    }
  }

  void work() {
    for (;;) {
      std::string id;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        id = queue_.front();
        queue_.pop_front();
      }
      execute(id);
    }
  }

  void execute(const std::string& id) {
    JobRecord rec;
    {
      std::lock_guard lock(job_mu_);
      auto loaded = store_.job(id);
      if (!loaded || loaded->status != JobStatus::queued) return;
      rec = std::move(*loaded);
      rec.status = JobStatus::running;
      rec.started_at = utc_now();
      rec.progress_done = 0;
      store_.save_job(rec);
    }
    try {
      const auto denoiser = model(rec.checkpoint);
      const RgbImage reference = store_.roll_image(rec.job.roll_id);
      RunOptions options;
      options.parallelism = cfg_.sample_parallelism;
      options.cancel = &abort_;
      options.on_progress = [&](int done, int) {
        std::lock_guard lock(job_mu_);
        if (abort_) return;
        rec.progress_done = done;
        store_.save_job(rec);
      };
      const JobOutcome outcome = run_job(rec.job, reference, *denoiser, options);
      std::lock_guard lock(job_mu_);
      if (abort_) return;
      store_.write_results(rec, outcome);
      rec.scores = outcome.scores;
      rec.failures = outcome.failures;
      for (const auto& r : outcome.results) rec.results.push_back({r.rank, r.score, r.seed_offset});
      rec.status = JobStatus::done;
      rec.finished_at = utc_now();
      store_.save_job(rec);
      log::info("job " + id + " done");
    } catch (const std::exception& e) {
      std::lock_guard lock(job_mu_);
      if (abort_) return;
      rec.status = JobStatus::failed;
      rec.error = e.what();
      rec.finished_at = utc_now();
      store_.save_job(rec);
      log::error("job " + id + " failed: " + e.what());
    }
  }

  void shutdown_workers() {
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& w : workers_)
      if (w.joinable()) w.join();
    workers_.clear();
  }

  void shutdown(bool abandon) {
    if (!running_.exchange(false)) return;
    if (abandon) abort_ = true;
    http_.stop();
    if (listener_.joinable()) listener_.join();
    shutdown_workers();
  }

  ServiceConfig cfg_;
  Store store_;
  ModelResolver resolver_;
  httplib::Server http_;
  std::thread listener_;
  std::vector<std::thread> workers_;
  int port_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<bool> abort_{false};

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  bool stopping_ = false;

  std::mutex job_mu_;  // serializes manifest reads and writes
  std::mutex model_mu_;
  std::map<std::string, std::shared_ptr<const Denoiser>> models_;
};

}  // namespace pom::service
