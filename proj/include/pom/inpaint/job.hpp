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
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pom/codec/midi.hpp"
#include "pom/codec/pianoroll.hpp"
#include "pom/diffusion/inpaint.hpp"
#include "pom/domain.hpp"
#include "pom/inpaint/mask_spec.hpp"

namespace pom {

struct GenerationJob {
  std::string roll_id;
  MaskSpec mask;
  int steps = kDefaultSteps;
  int repaints = 1;
  int n_samples = 1;
  int top_k = 1;
  double eta = 1.0;
  std::uint64_t seed = 0;

  /// Field name -> message for every violated invariant.
  std::map<std::string, std::string> validate() const {
    std::map<std::string, std::string> errors;
    if (steps < 2) errors["steps"] = "must be >= 2";
    if (repaints < 1) errors["repaints"] = "must be >= 1";
    if (n_samples < 1) errors["n_samples"] = "must be >= 1";
    if (top_k < 1 || top_k > n_samples) errors["top_k"] = "must satisfy 1 <= top_k <= n_samples";
    if (!(eta >= 0)) errors["eta"] = "must be >= 0";
    return errors;
  }
};

struct RankedResult {
  RgbImage image;  // unfolded roll window
  std::vector<NoteEvent> notes;
  double score = 0;
  int rank = 0;
  int seed_offset = 0;

  std::vector<std::uint8_t> midi() const { return midi::notes_to_midi(notes); }
};

struct SampleFailure {
  int seed_offset = 0;
  std::string error;
};

struct JobOutcome {
  std::vector<RankedResult> results;
  std::vector<SampleFailure> failures;
  std::vector<double> scores;  // per seed offset; NaN for failed samples
};

/// Fill score: sum over generate pixels of G / 255.
inline double score_fill(const RgbImage& image, const Mask& mask) {
  if (image.width() != mask.width() || image.height() != mask.height())
    throw std::invalid_argument("score_fill: image " + std::to_string(image.width()) + "x" +
                                std::to_string(image.height()) + " vs mask " + std::to_string(mask.width()) + "x" +
                                std::to_string(mask.height()));
  double total = 0;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask.generate(r, c)) total += image.at(r, c).g / 255.0;
  return total;
}

/// Descending score, ties by ascending seed offset.
inline bool result_order(const RankedResult& a, const RankedResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.seed_offset < b.seed_offset;
}

struct RunOptions {
  int parallelism = 1;
  std::function<void(int done, int total)> on_progress;
  const std::atomic<bool>* cancel = nullptr;
};

inline RollDomain domain_for(const Denoiser& model) {
  const auto shape = model.input_shape();
  if (!shape) return RollDomain::for_size(kFoldedSize);
  if (shape->height != shape->width || shape->channels != 3)
    throw ModelError("denoiser input shape " + shape->str() + " is not a square RGB raster");
  return RollDomain::for_size(shape->height);
}

/// The roll window and roll-space mask a job operates on.
struct JobFrame {
  RollDomain domain;
  RgbImage window;
  Mask roll_mask;
};

inline JobFrame frame_job(const RgbImage& reference, const MaskSpec& spec, const Denoiser& model) {
  check_roll(reference);
  const auto domain = domain_for(model);
  RgbImage window = crop_columns(reference, 0, domain.roll_width());
  Mask roll_mask = domain.restrict(rasterize_mask(spec, domain.roll_width()));
  return {domain, std::move(window), std::move(roll_mask)};
}

/// Brute-force sweep: n_samples seeded inpaintings, scored by mask fill and
/// ranked. Failed samples are reported; the job throws only if all fail.
inline JobOutcome run_job(const GenerationJob& job, const RgbImage& reference, const Denoiser& model,
                          const RunOptions& options = {}) {
  if (const auto errors = job.validate(); !errors.empty())
    throw UsageError("invalid job: " + errors.begin()->first + " " + errors.begin()->second);
  const JobFrame frame = frame_job(reference, job.mask, model);
  const Raster x_ref = frame.domain.to_model(frame.window);
  const Mask model_mask = frame.domain.to_model(frame.roll_mask);
  const SigmaSchedule schedule = karras_schedule(job.steps);

  std::vector<std::optional<RankedResult>> samples(static_cast<std::size_t>(job.n_samples));
  std::vector<std::string> errors(static_cast<std::size_t>(job.n_samples));
  std::atomic<int> next{0};
  std::mutex progress_mu;
  int done = 0;

  auto worker = [&] {
    for (int k = next++; k < job.n_samples; k = next++) {
      if (options.cancel && options.cancel->load()) return;
      try {
        const Raster x = inpaint_sample(model, x_ref, model_mask, schedule, {job.repaints}, job.eta,
                                        job.seed + static_cast<std::uint64_t>(k));
        RgbImage roll = frame.domain.to_roll(x, frame.window);
        for (int r = 0; r < roll.height(); ++r)
          for (int c = 0; c < roll.width(); ++c)
            if (!frame.roll_mask.generate(r, c)) roll.at(r, c) = frame.window.at(r, c);
        RankedResult res;
        res.score = score_fill(roll, frame.roll_mask);
        res.notes = decode_roll(roll).notes;
        res.image = std::move(roll);
        res.seed_offset = k;
        samples[static_cast<std::size_t>(k)] = std::move(res);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
      if (options.on_progress) {
        std::lock_guard lock(progress_mu);
        options.on_progress(++done, job.n_samples);
      }
    }
  };

  const int threads = std::clamp(options.parallelism, 1, job.n_samples);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (options.cancel && options.cancel->load()) throw ModelError("job cancelled");

  JobOutcome out;
  for (int k = 0; k < job.n_samples; ++k) {
    auto& s = samples[static_cast<std::size_t>(k)];
    if (s) {
      out.scores.push_back(s->score);
      out.results.push_back(std::move(*s));
    } else {
      out.scores.push_back(std::numeric_limits<double>::quiet_NaN());
      out.failures.push_back({k, errors[static_cast<std::size_t>(k)]});
    }
  }
  if (out.results.empty())
    throw ModelError("all " + std::to_string(job.n_samples) + " samples failed; first error: " + out.failures.front().error);
  std::sort(out.results.begin(), out.results.end(), result_order);
  if (static_cast<int>(out.results.size()) > job.top_k) out.results.resize(static_cast<std::size_t>(job.top_k));
  for (std::size_t i = 0; i < out.results.size(); ++i) out.results[i].rank = static_cast<int>(i) + 1;
  return out;
}

}  // namespace pom
