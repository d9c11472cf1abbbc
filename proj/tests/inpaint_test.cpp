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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pom/data/motifs.hpp"
#include "pom/inpaint/job.hpp"
#include "pom/inpaint/job_json.hpp"
#include "pom/models/gaussian.hpp"
#include "support.hpp"

namespace pom {
namespace {

MaskSpec preset(Preset kind, TickPitchRect rect = {}) { return {PresetMask{kind, rect}}; }

int count_cols(const Mask& m, int row) {
  int n = 0;
  for (int c = 0; c < m.width(); ++c) n += m.generate(row, c);
  return n;
}

TEST(RasterizeMask, MelodyCoversUpperPitches) {
  const auto m = rasterize_mask(preset(Preset::melody), 512);
  for (int r = 0; r < 128; ++r) {
    const bool expect = r >= 8 && r <= 67;  // pitches 119..60
    EXPECT_EQ(count_cols(m, r), expect ? 512 : 0) << r;
  }
}

TEST(RasterizeMask, AccompanimentIsComplementOfMelodyInsideBorders) {
  const auto mel = rasterize_mask(preset(Preset::melody), 64);
  const auto acc = rasterize_mask(preset(Preset::accompaniment), 64);
  for (int r = 0; r < 128; ++r)
    for (int c = 0; c < 64; ++c) EXPECT_EQ(acc.generate(r, c), !is_border_row(r) && !mel.generate(r, c));
}

TEST(RasterizeMask, ContinuationCoversSecondHalf) {
  const auto m = rasterize_mask(preset(Preset::continuation), 512);
  for (int r = 8; r < 120; ++r)
    for (int c = 0; c < 512; ++c) ASSERT_EQ(m.generate(r, c), c >= 256);
  for (int c = 0; c < 512; ++c) EXPECT_FALSE(m.generate(0, c));
}

TEST(RasterizeMask, CustomRect) {
  const auto m = rasterize_mask(preset(Preset::custom_rect, {10, 20, 60, 62}), 64);
  EXPECT_EQ(m.area(), 30u);
  EXPECT_TRUE(m.generate(pitch_to_row(60), 10));
  EXPECT_TRUE(m.generate(pitch_to_row(62), 19));
  EXPECT_FALSE(m.generate(pitch_to_row(63), 10));
  EXPECT_FALSE(m.generate(pitch_to_row(60), 20));
  EXPECT_THROW(rasterize_mask(preset(Preset::custom_rect, {20, 20, 60, 62}), 64), DataError);
  EXPECT_THROW(rasterize_mask(preset(Preset::custom_rect, {0, 20, 62, 60}), 64), DataError);
}

TEST(RasterizeMask, PolygonUsesPixelCentres) {
  const MaskSpec spec{std::vector<Polygon>{{{{100, 70}, {200, 70}, {200, 90}, {100, 90}}}}};
  const auto m = rasterize_mask(spec, 512);
  for (int r = 0; r < 128; ++r)
    for (int c = 0; c < 512; ++c) {
      const int p = row_to_pitch(r);
      ASSERT_EQ(m.generate(r, c), c >= 100 && c < 200 && p >= 70 && p < 90) << r << "," << c;
    }
}

TEST(RasterizeMask, PolygonWindingAndBorders) {
  // Clockwise triangle reaching into the top border rows.
  const MaskSpec spec{std::vector<Polygon>{{{{0, 0}, {0, 128}, {50, 128}}}}};
  const auto m = rasterize_mask(spec, 64);
  for (int r = 0; r < 8; ++r) EXPECT_EQ(count_cols(m, r), 0);
  EXPECT_GT(count_cols(m, 8), 40);
  EXPECT_GT(count_cols(m, 60), 0);
}

TEST(RasterizeMask, DegeneratePolygonsRejected) {
  EXPECT_THROW(rasterize_mask({std::vector<Polygon>{{{{0, 0}, {10, 10}, {20, 20}}}}}, 64), DataError);
  EXPECT_THROW(rasterize_mask({std::vector<Polygon>{{{{0, 0}, {10, 10}}}}}, 64), DataError);
  EXPECT_THROW(rasterize_mask({std::vector<Polygon>{}}, 64), DataError);
}

TEST(RasterizeMask, GrayImageAndFoldedGray) {
  GrayImage g(64, 128);
  g.at(50, 3) = 255;
  g.at(2, 3) = 255;  // border row: cleared
  const auto m = rasterize_mask({g}, 64);
  EXPECT_EQ(m.area(), 1u);
  EXPECT_TRUE(m.generate(50, 3));

  GrayImage folded(256, 256);
  folded.at(50, 3) = 255;
  folded.at(128 + 50, 3) = 255;
  const auto u = rasterize_mask({folded}, 512);
  EXPECT_EQ(u.area(), 2u);
  EXPECT_TRUE(u.generate(50, 3));
  EXPECT_TRUE(u.generate(50, 508));
  EXPECT_THROW(rasterize_mask({GrayImage(10, 10)}, 64), DataError);
}

TEST(ScoreFill, SumsGreenOverGeneratePixels) {
  RgbImage img(8, 128);
  Mask m(128, 8);
  m.set(20, 1, true);
  m.set(21, 1, true);
  img.at(20, 1).g = 255;
  img.at(21, 1).g = 51;
  img.at(30, 1).g = 255;  // outside the mask
  EXPECT_DOUBLE_EQ(score_fill(img, m), 1.2);
  EXPECT_DOUBLE_EQ(score_fill(RgbImage(8, 128), m), 0.0);
  EXPECT_THROW(score_fill(RgbImage(9, 128), m), std::invalid_argument);
}

TEST(ScoreFill, MonotoneInGeneratePixels) {
  std::mt19937_64 rng(1);
  auto img = testing::random_image(rng, 32, 128);
  Mask m(128, 32);
  for (int r = 30; r < 60; ++r)
    for (int c = 0; c < 16; ++c) m.set(r, c, true);
  double prev = score_fill(img, m);
  for (int k = 0; k < 50; ++k) {
    const int r = 30 + static_cast<int>(rng() % 30), c = static_cast<int>(rng() % 16);
    if (img.at(r, c).g == 255) continue;
    ++img.at(r, c).g;
    const double s = score_fill(img, m);
    EXPECT_GT(s, prev);
    prev = s;
  }
  img.at(100, 20).g = static_cast<std::uint8_t>(img.at(100, 20).g ^ 0xFF);
  EXPECT_DOUBLE_EQ(score_fill(img, m), prev);
}

TEST(ResultOrder, ScoreThenSeedOffset) {
  RankedResult a, b, c;
  a.score = 2;
  a.seed_offset = 5;
  b.score = 2;
  b.seed_offset = 1;
  c.score = 3;
  c.seed_offset = 9;
  std::vector<RankedResult> v{a, b, c};
  std::sort(v.begin(), v.end(), result_order);
  EXPECT_EQ(v[0].seed_offset, 9);
  EXPECT_EQ(v[1].seed_offset, 1);
  EXPECT_EQ(v[2].seed_offset, 5);
}

RgbImage reference_roll(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto notes = data::synthetic_song(rng, 32);
  return crop_columns(data::render_song("ref", notes).image, 0, 512);
}

GenerationJob small_job(Preset kind = Preset::continuation) {
  GenerationJob job;
  job.roll_id = "r";
  job.mask = preset(kind);
  job.steps = 4;
  job.n_samples = 4;
  job.top_k = 2;
  job.seed = 7;
  return job;
}

const AnalyticGaussianDenoiser& gaussian() {
  static const AnalyticGaussianDenoiser d(-0.75, 0.25);
  return d;
}

TEST(RunJob, RanksAndTruncatesToTopK) {
  const auto ref = reference_roll(1);
  std::vector<std::pair<int, int>> progress;
  RunOptions opt;
  opt.on_progress = [&](int done, int total) { progress.emplace_back(done, total); };
  const auto out = run_job(small_job(), ref, gaussian(), opt);
  ASSERT_EQ(out.results.size(), 2u);
  EXPECT_EQ(out.scores.size(), 4u);
  EXPECT_TRUE(out.failures.empty());
  EXPECT_EQ(out.results[0].rank, 1);
  EXPECT_EQ(out.results[1].rank, 2);
  EXPECT_GE(out.results[0].score, out.results[1].score);
  auto sorted = out.scores;
  std::sort(sorted.rbegin(), sorted.rend());
  EXPECT_EQ(out.results[0].score, sorted[0]);
  EXPECT_EQ(out.results[1].score, sorted[1]);
  EXPECT_EQ(out.scores[static_cast<std::size_t>(out.results[0].seed_offset)], out.results[0].score);
  ASSERT_EQ(progress.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(progress[static_cast<std::size_t>(i)], std::make_pair(i + 1, 4));
}

TEST(RunJob, KeepRegionMatchesReference) {
  const auto ref = reference_roll(2);
  const auto job = small_job(Preset::melody);
  const auto out = run_job(job, ref, gaussian());
  const auto mask = rasterize_mask(job.mask, 512);
  for (const auto& r : out.results) {
    ASSERT_EQ(r.image.width(), 512);
    for (int row = 0; row < 128; ++row)
      for (int c = 0; c < 512; ++c)
        if (!mask.generate(row, c)) ASSERT_EQ(r.image.at(row, c), ref.at(row, c)) << row << "," << c;
    EXPECT_EQ(decode_roll(r.image).notes, r.notes);
  }
}

TEST(RunJob, DeterministicAcrossParallelism) {
  const auto ref = reference_roll(3);
  RunOptions serial, parallel;
  parallel.parallelism = 3;
  const auto a = run_job(small_job(), ref, gaussian(), serial);
  const auto b = run_job(small_job(), ref, gaussian(), parallel);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    EXPECT_EQ(a.results[i].seed_offset, b.results[i].seed_offset);
    EXPECT_EQ(a.results[i].image, b.results[i].image);
  }
  EXPECT_EQ(a.scores, b.scores);
}

TEST(RunJob, SeedOffsetsMatchSingleSampleJobs) {
  const auto ref = reference_roll(4);
  auto job = small_job();
  const auto all = run_job(job, ref, gaussian());
  job.n_samples = job.top_k = 1;
  job.seed += static_cast<std::uint64_t>(all.results[0].seed_offset);
  const auto one = run_job(job, ref, gaussian());
  EXPECT_EQ(one.results[0].image, all.results[0].image);
}

// Fails at the first solver call for seeds whose initial noise starts positive.
class FlakyDenoiser final : public Denoiser {
 public:
  Raster denoise(const Raster& x, double sigma) const override {
    if (sigma > 50 && x[0] > 0) throw ModelError("flaky");
    return inner_(x, sigma);
  }
  std::string name() const override { return "flaky"; }

 private:
  AnalyticGaussianDenoiser inner_{-0.75, 0.25};
};

class BrokenDenoiser final : public Denoiser {
 public:
  Raster denoise(const Raster& x, double) const override {
    Raster out(x.shape());
    out[0] = std::numeric_limits<float>::quiet_NaN();
    return out;
  }
  std::string name() const override { return "broken"; }
};

TEST(RunJob, PartialFailuresReported) {
  const auto ref = reference_roll(5);
  auto job = small_job();
  job.n_samples = 8;
  job.top_k = 8;
  const auto out = run_job(job, ref, FlakyDenoiser());
  ASSERT_FALSE(out.failures.empty());
  ASSERT_FALSE(out.results.empty());
  EXPECT_EQ(out.failures.size() + out.results.size(), 8u);
  for (const auto& f : out.failures) {
    EXPECT_TRUE(std::isnan(out.scores[static_cast<std::size_t>(f.seed_offset)]));
    EXPECT_NE(f.error.find("flaky"), std::string::npos);
  }
}

TEST(RunJob, AllFailedThrows) {
  const auto ref = reference_roll(5);
  EXPECT_THROW(run_job(small_job(), ref, BrokenDenoiser()), ModelError);
}

TEST(RunJob, InvalidJobAndCancellation) {
  const auto ref = reference_roll(6);
  auto job = small_job();
  job.top_k = 5;
  EXPECT_THROW(run_job(job, ref, gaussian()), UsageError);
  std::atomic<bool> cancel{true};
  RunOptions opt;
  opt.cancel = &cancel;
  EXPECT_THROW(run_job(small_job(), ref, gaussian(), opt), ModelError);
  EXPECT_THROW(run_job(small_job(), RgbImage(512, 64), gaussian()), DataError);
}

TEST(Job, Validation) {
  GenerationJob job;
  EXPECT_TRUE(job.validate().empty());
  job.steps = 1;
  job.repaints = 0;
  job.n_samples = 2;
  job.top_k = 3;
  job.eta = -1;
  const auto e = job.validate();
  EXPECT_EQ(e.size(), 4u);
  EXPECT_TRUE(e.count("steps") && e.count("repaints") && e.count("top_k") && e.count("eta"));
}

TEST(JobJson, RoundTripForEveryMaskKind) {
  GrayImage g(64, 128);
  g.at(40, 2) = 255;
  for (const MaskSpec& spec : {preset(Preset::melody), preset(Preset::custom_rect, {1, 9, 40, 50}),
                               MaskSpec{std::vector<Polygon>{{{{0, 10}, {5, 10}, {5, 20}}}}}, MaskSpec{g}}) {
    auto job = small_job();
    job.mask = spec;
    job.eta = 0.25;
    job.seed = 123456789012345ULL;
    FieldErrors errors;
    const auto back = job_from_json(job_to_json(job), errors);
    EXPECT_TRUE(errors.empty()) << errors.begin()->second;
    EXPECT_EQ(job_to_json(back), job_to_json(job));
    EXPECT_EQ(rasterize_mask(back.mask, 64).to_gray(), rasterize_mask(spec, 64).to_gray());
  }
}

TEST(JobJson, FieldErrors) {
  FieldErrors errors;
  job_from_json({{"mask", {{"preset", "bogus"}}}, {"steps", "ten"}, {"eta", true}, {"seed", -3}, {"top_k", 0}},
                errors);
  for (const char* field : {"roll_id", "mask", "steps", "eta", "seed", "top_k"}) EXPECT_TRUE(errors.count(field)) << field;
  errors.clear();
  job_from_json(nlohmann::json::array(), errors);
  EXPECT_TRUE(errors.count("body"));
  errors.clear();
  job_from_json({{"roll_id", "x"}, {"mask", {{"preset", "melody"}, {"polygons", nlohmann::json::array()}}}}, errors);
  EXPECT_TRUE(errors.count("mask"));
  errors.clear();
  job_from_json({{"roll_id", "x"}, {"mask", {{"png_base64", "!!!"}}}}, errors);
  EXPECT_TRUE(errors.count("mask"));
  errors.clear();
  const auto job = job_from_json({{"roll_id", "x"}, {"mask", {{"preset", "continuation"}}}}, errors);
  EXPECT_TRUE(errors.empty());
  EXPECT_EQ(job.steps, kDefaultSteps);
  EXPECT_EQ(job.n_samples, 1);
}

}  // namespace
}  // namespace pom
