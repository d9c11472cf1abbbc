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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pom/codec/midi.hpp"
#include "pom/data/dataset.hpp"
#include "pom/inpaint/job_json.hpp"
#include "pom/util/files.hpp"
#include "pom/util/hash.hpp"
#include "pom/util/log.hpp"
#include "pom/util/png.hpp"

namespace pom::service {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

/// Ids are lowercase hex; anything else never touches the filesystem.
inline bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

enum class SourceKind { midi, png };

inline std::string kind_name(SourceKind k) { return k == SourceKind::midi ? "midi" : "png"; }

struct RollRecord {
  std::string id;
  SourceKind kind = SourceKind::midi;
  int width = 0;
  std::string created_at;

  json to_json() const {
    const std::string ext = kind == SourceKind::midi ? "mid" : "png";
    return {{"id", id},
            {"source_kind", kind_name(kind)},
            {"width", width},
            {"created_at", created_at},
            {"files", {"source." + ext, "roll.png", "meta.json"}}};
  }
  static RollRecord from_json(const json& j) {
    return {j.at("id").get<std::string>(), j.at("source_kind").get<std::string>() == "midi" ? SourceKind::midi : SourceKind::png,
            j.at("width").get<int>(), j.at("created_at").get<std::string>()};
  }
};

enum class JobStatus { queued, running, done, failed };

inline std::string status_name(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "?";
}

inline JobStatus parse_status(const std::string& s) {
  if (s == "queued") return JobStatus::queued;
  if (s == "running") return JobStatus::running;
  if (s == "done") return JobStatus::done;
  if (s == "failed") return JobStatus::failed;
  throw DataError("unknown job status '" + s + "'");
}

struct ResultEntry {
  int rank = 0;
  double score = 0;
  int seed_offset = 0;
};

struct JobRecord {
  std::string id;
  GenerationJob job;
  std::string checkpoint;
  JobStatus status = JobStatus::queued;
  int progress_done = 0;
  int progress_total = 0;
  std::string error;
  std::string created_at;
  std::string started_at;
  std::string finished_at;
  std::vector<double> scores;  // per seed offset, NaN for failed samples
  std::vector<SampleFailure> failures;
  std::vector<ResultEntry> results;

  json to_json() const {
    json j = job_to_json(job);
    j["id"] = id;
    j["checkpoint"] = checkpoint;
    j["status"] = status_name(status);
    j["progress"] = {{"done", progress_done}, {"total", progress_total}};
    j["error"] = error.empty() ? json(nullptr) : json(error);
    j["timings"] = {{"created_at", created_at},
                    {"started_at", started_at.empty() ? json(nullptr) : json(started_at)},
                    {"finished_at", finished_at.empty() ? json(nullptr) : json(finished_at)}};
    auto sj = json::array();
    for (double s : scores) sj.push_back(std::isnan(s) ? json(nullptr) : json(s));
    j["scores"] = std::move(sj);
    auto fj = json::array();
    for (const auto& f : failures) fj.push_back({{"seed_offset", f.seed_offset}, {"error", f.error}});
    j["failures"] = std::move(fj);
    auto rj = json::array();
    for (const auto& r : results) rj.push_back({{"rank", r.rank}, {"score", r.score}, {"seed_offset", r.seed_offset}});
    j["results"] = std::move(rj);
    return j;
  }

  static JobRecord from_json(const json& j) {
    JobRecord r;
    FieldErrors errors;
    r.job = job_from_json(j, errors);
    if (!errors.empty()) throw DataError("corrupt job manifest: " + errors.begin()->first + " " + errors.begin()->second);
    r.id = j.at("id").get<std::string>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.status = parse_status(j.at("status").get<std::string>());
    r.progress_done = j.at("progress").at("done").get<int>();
    r.progress_total = j.at("progress").at("total").get<int>();
    if (j.at("error").is_string()) r.error = j["error"].get<std::string>();
    const auto& t = j.at("timings");
    r.created_at = t.at("created_at").get<std::string>();
    if (t.at("started_at").is_string()) r.started_at = t["started_at"].get<std::string>();
    if (t.at("finished_at").is_string()) r.finished_at = t["finished_at"].get<std::string>();
    for (const auto& s : j.at("scores")) r.scores.push_back(s.is_null() ? std::nan("") : s.get<double>());
    for (const auto& f : j.at("failures")) r.failures.push_back({f.at("seed_offset").get<int>(), f.at("error").get<std::string>()});
    for (const auto& e : j.at("results"))
      r.results.push_back({e.at("rank").get<int>(), e.at("score").get<double>(), e.at("seed_offset").get<int>()});
    return r;
  }
};

/// On-disk layout under data_dir:
///   rolls/{sha256}/source.{mid|png}, roll.png, meta.json
///   jobs/{id}/job.json, mask.png, results/{rank}.png, results/{rank}.mid, scores.json
class Store {
 public:
  explicit Store(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "rolls");
    fs::create_directories(root_ / "jobs");
  }

  const fs::path& root() const { return root_; }
  fs::path roll_dir(const std::string& id) const { return root_ / "rolls" / id; }
  fs::path job_dir(const std::string& id) const { return root_ / "jobs" / id; }

  /// Stores an upload. Returns the record and whether it was newly created.
  /// Throws DataError when the bytes do not decode.
  std::pair<RollRecord, bool> put_roll(std::span<const std::uint8_t> bytes, SourceKind kind) {
    const std::string id = sha256_hex(bytes);
    std::lock_guard lock(roll_mu_);
    if (auto existing = roll(id)) return {*existing, false};
    RgbImage image;
    if (kind == SourceKind::midi) {
      const auto notes = midi::midi_to_notes(bytes);
      if (notes.empty()) throw DataError("MIDI file contains no notes");
      image = data::render_song(id, notes).image;
    } else {
      image = png::decode_rgb(bytes);
      check_roll(image);
    }
    RollRecord rec{id, kind, image.width(), utc_now()};
    const fs::path dir = roll_dir(id);
    fs::create_directories(dir);
    write_file_atomic(dir / (kind == SourceKind::midi ? "source.mid" : "source.png"), bytes);
    png::write(dir / "roll.png", image);
    // meta.json last: its presence marks the roll complete.
    write_file_atomic(dir / "meta.json", rec.to_json().dump(2));
    return {rec, true};
  }

  std::optional<RollRecord> roll(const std::string& id) const {
    if (!valid_id(id)) return std::nullopt;
    const fs::path meta = roll_dir(id) / "meta.json";
    if (!fs::exists(meta)) return std::nullopt;
    return RollRecord::from_json(json::parse(read_text(meta)));
  }

  RgbImage roll_image(const std::string& id) const { return png::read_rgb(roll_dir(id) / "roll.png"); }

  static std::string new_job_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%012llx%08x", static_cast<unsigned long long>(ms),
                  static_cast<unsigned>(rng() & 0xffffffffu));
    return buf;
  }

  /// Writes the manifest and the requested mask (rasterized at full window width).
  void create_job(const JobRecord& rec) {
    const fs::path dir = job_dir(rec.id);
    fs::create_directories(dir / "results");
    GrayImage mask_png;
    if (const auto* gray = std::get_if<GrayImage>(&rec.job.mask.source))
      mask_png = *gray;
    else
      mask_png = rasterize_mask(rec.job.mask, kWindowWidth).to_gray();
    png::write(dir / "mask.png", mask_png);
    save_job(rec);
  }

  void save_job(const JobRecord& rec) { write_file_atomic(job_dir(rec.id) / "job.json", rec.to_json().dump(2)); }

  std::optional<JobRecord> job(const std::string& id) const {
    if (!valid_id(id)) return std::nullopt;
    const fs::path manifest = job_dir(id) / "job.json";
    if (!fs::exists(manifest)) return std::nullopt;
    try {
      return JobRecord::from_json(json::parse(read_text(manifest)));
    } catch (const json::exception& e) {
      throw DataError("corrupt job manifest " + manifest.string() + ": " + e.what());
    }
  }

  /// All jobs, oldest first.
  std::vector<JobRecord> jobs() const {
    std::vector<JobRecord> out;
    for (const auto& entry : fs::directory_iterator(root_ / "jobs")) {
      const std::string id = entry.path().filename().string();
      try {
        if (auto rec = job(id)) out.push_back(std::move(*rec));
      } catch (const std::exception& e) {
        log::warn(std::string("skipping job ") + id + ": " + e.what());
      }
    }
    std::sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) {
      return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
    });
    return out;
  }

  void write_results(const JobRecord& rec, const JobOutcome& outcome) {
    const fs::path dir = job_dir(rec.id) / "results";
    fs::create_directories(dir);
    json scores = json::array();
    for (const auto& r : outcome.results) {
      const std::string stem = std::to_string(r.rank);
      png::write(dir / (stem + ".png"), r.image);
      write_file_atomic(dir / (stem + ".mid"), r.midi());
      scores.push_back({{"rank", r.rank}, {"score", r.score}, {"seed_offset", r.seed_offset}});
    }
    write_file_atomic(job_dir(rec.id) / "scores.json", scores.dump(2));
  }

  fs::path result_path(const std::string& job_id, int rank, const std::string& ext) const {
    return job_dir(job_id) / "results" / (std::to_string(rank) + "." + ext);
  }

 private:
  fs::path root_;
  std::mutex roll_mu_;
};

}  // namespace pom::service
