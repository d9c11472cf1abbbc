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
#include <fstream>
#include <random>
#include <thread>

#include "pom/data/motifs.hpp"
#include "pom/models/checkpoint.hpp"
#include "pom/models/gaussian.hpp"
#include "pom/models/hourglass.hpp"
#include "pom/models/train.hpp"
#include "support.hpp"

namespace pom {
namespace {

HourglassConfig small_config() {
  HourglassConfig c;
  c.image_size = 16;
  c.widths = {8, 16};
  c.depths = {1, 1};
  c.heads = 2;
  c.cond_dim = 16;
  c.fourier_features = 8;
  return c;
}

Raster random_raster(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  NoiseSource n(seed);
  Raster x = n.normal(shape);
  for (auto& v : x.values()) v = static_cast<float>(v * scale);
  return x;
}

// Gives every parameter (including the zero-initialized ones) small random values.
void jitter(HourglassNet& net, std::uint64_t seed, float scale = 0.2f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0, scale);
  for (auto& p : net.parameters())
    for (Eigen::Index i = 0; i < p.var->value.size(); ++i) p.var->value.data()[i] += d(rng);
}

TEST(Precond, Identities) {
  const auto k = Precond::at(0.5, 0.5);
  EXPECT_DOUBLE_EQ(k.c_skip, 0.5);
  for (double s : {0.01, 0.3, 1.0, 160.0}) {
    const auto p = Precond::at(s, 0.5);
    EXPECT_NEAR(p.c_out * p.c_out, p.c_skip * s * s, 1e-12 * (1 + s * s));
    EXPECT_NEAR(p.c_in * p.c_in * (s * s + 0.25), 1.0, 1e-12);
    EXPECT_NEAR(p.c_noise, std::log(s) / 4, 1e-15);
  }
}

TEST(Hourglass, ConfigValidation) {
  auto c = small_config();
  c.image_size = 18;
  EXPECT_THROW(c.validate(), UsageError);
  c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_NO_THROW(HourglassConfig().validate());
  EXPECT_EQ(HourglassConfig::from_json(small_config().to_json()), small_config());
}

TEST(ToyDenoiser, ZeroInitOutputIsSkipScaled) {
  auto net = std::make_shared<HourglassNet>(small_config());
  const ToyDenoiser d(net);
  const Raster x = random_raster({3, 16, 16}, 1, 3.0);
  for (double s : {0.01, 1.0, 160.0}) {
    const auto out = d(x, s);
    const double c_skip = Precond::at(s, 0.5).c_skip;
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(out[i], static_cast<float>(c_skip * x[i]));
  }
}

TEST(ToyDenoiser, ShapeAndFiniteness) {
  auto net = std::make_shared<HourglassNet>(small_config());
  jitter(*net, 3);
  const ToyDenoiser d(net);
  const Raster x = random_raster({3, 16, 16}, 2);
  for (double s : {0.01, 1.0, 160.0}) {
    const auto out = d(x, s);
    EXPECT_EQ(out.shape(), x.shape());
    EXPECT_TRUE(out.all_finite());
  }
  EXPECT_THROW(d(Raster({3, 8, 8}), 1.0), std::invalid_argument);
  EXPECT_THROW(d(x, 0.0), std::invalid_argument);
  EXPECT_EQ(*d.input_shape(), (Shape{3, 16, 16}));
}

TEST(ToyDenoiser, ConcurrentCallsAgree) {
  auto net = std::make_shared<HourglassNet>(small_config());
  jitter(*net, 3);
  const ToyDenoiser d(net);
  const Raster x = random_raster({3, 16, 16}, 2);
  const auto expect = d(x, 0.7);
  std::vector<Raster> got(4);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < 4; ++t) pool.emplace_back([&, t] { got[static_cast<std::size_t>(t)] = d(x, 0.7); });
  }
  for (const auto& g : got)
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(g[i], expect[i]);
}

// Cyclic shift of every channel by (dr, dc) pixels.
Raster shift(const Raster& x, int dr, int dc) {
  const auto s = x.shape();
  Raster out(s);
  for (int c = 0; c < s.channels; ++c)
    for (int r = 0; r < s.height; ++r)
      for (int q = 0; q < s.width; ++q) out.at(c, (r + dr) % s.height, (q + dc) % s.width) = x.at(c, r, q);
  return out;
}

TEST(Hourglass, TranslationEquivariantWithoutPositionEmbedding) {
  auto cfg = small_config();
  cfg.pos_embed = false;
  auto net = std::make_shared<HourglassNet>(cfg);
  jitter(*net, 5);
  const ToyDenoiser d(net);
  const Raster x = random_raster({3, 16, 16}, 4);
  // One bottleneck token covers patch * 2^(levels-1) pixels per side.
  const int unit = cfg.patch << (cfg.levels() - 1);
  const auto a = shift(d(x, 0.8), unit, 2 * unit);
  const auto b = d(shift(x, unit, 2 * unit), 0.8);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-4) << i;
}

double loss_value(const HourglassNet& net, const LossBatch& batch) {
  nn::Tape tape(false);
  return edm_loss(net, tape, batch)->value(0, 0);
}

TEST(Autograd, FiniteDifferenceGradientCheck) {
  HourglassNet net(small_config());
  jitter(net, 7, 0.3f);
  LossBatch batch{nn::Matrix(2, 3 * 16 * 16), nn::Matrix(2, 3 * 16 * 16), {0.3, 2.0}};
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  for (Eigen::Index i = 0; i < batch.clean.size(); ++i) {
    batch.clean.data()[i] = std::tanh(nd(rng));
    batch.noise.data()[i] = nd(rng);
  }
  net.zero_grad();
  nn::Tape tape;
  tape.backward(edm_loss(net, tape, batch));

  for (const char* name : {"patch_in.w", "mid.0.qkv.w", "down0.0.fc1.w", "cond.fc1.w", "patch_out.w"}) {
    nn::Var param;
    for (auto& p : net.parameters())
      if (p.name == name) param = p.var;
    ASSERT_TRUE(param) << name;
    ASSERT_EQ(param->grad.size(), param->value.size()) << name;
    std::vector<double> fd, bp;
    for (int k = 0; k < 8; ++k) {
      const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(param->value.size()));
      float& w = param->value.data()[idx];
      const float orig = w;
      const float h = 1e-2f;
      w = orig + h;
      const double up = loss_value(net, batch);
      w = orig - h;
      const double down = loss_value(net, batch);
      w = orig;
      fd.push_back((up - down) / (2.0 * h));
      bp.push_back(param->grad.data()[idx]);
    }
    double num = 0, den = 0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      num += (fd[i] - bp[i]) * (fd[i] - bp[i]);
      den += bp[i] * bp[i];
    }
    EXPECT_LT(std::sqrt(num / den), 1e-2) << name;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir;
  auto net = std::make_shared<HourglassNet>(small_config());
  jitter(*net, 9);
  save_checkpoint(*net, 42, dir / "m.pomck");
  const auto ck = read_checkpoint(dir / "m.pomck");
  EXPECT_EQ(ck.step, 42);
  auto loaded = load_model(dir / "m.pomck");
  const Raster x = random_raster({3, 16, 16}, 3);
  const auto a = ToyDenoiser(net)(x, 1.3), b = ToyDenoiser(loaded)(x, 1.3);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
  const auto bytes = read_file(dir / "m.pomck");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "POMCKPT1");
}

TEST(Checkpoint, TruncationRejectedWithoutPartialState) {
  HourglassNet net(small_config());
  jitter(net, 1);
  auto bytes = serialize_checkpoint(snapshot(net, 1));
  HourglassNet target(small_config());
  const auto before = target.parameters()[0].var->value;
  for (std::size_t cut : {std::size_t{4}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(load_into(target, parse_checkpoint(t)), DataError) << cut;
  }
  EXPECT_EQ(target.parameters()[0].var->value, before);
}

TEST(Checkpoint, CorruptHeaderAndVersionRejected) {
  HourglassNet net(small_config());
  auto bytes = serialize_checkpoint(snapshot(net, 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad_magic), DataError);
  std::string text(bytes.begin(), bytes.end());
  const auto pos = text.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  auto bad_version = bytes;
  bad_version[pos + 10] = '7';
  EXPECT_THROW(parse_checkpoint(bad_version), DataError);
}

TEST(Checkpoint, ConfigMismatchReportsDiff) {
  HourglassNet net(small_config());
  auto other = small_config();
  other.widths = {8, 32};
  HourglassNet target(other);
  try {
    load_into(target, snapshot(net, 0));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("widths"), std::string::npos) << e.what();
  }
}

TEST(Train, SeededRunsGiveIdenticalTraces) {
  testing::TempDir dir;
  const auto songs = data::synthetic_corpus(4, 3, 8);
  TrainOptions opt;
  opt.steps = 5;
  opt.batch = 2;
  opt.seed = 11;
  auto cfg = small_config();
  HourglassNet a(cfg), b(cfg);
  opt.loss_csv = dir / "a.csv";
  const auto ta = train_toy(a, songs, opt);
  opt.loss_csv = dir / "b.csv";
  const auto tb = train_toy(b, songs, opt);
  ASSERT_EQ(ta.size(), 5u);
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].loss, tb[i].loss);
  EXPECT_EQ(read_text(dir / "a.csv"), read_text(dir / "b.csv"));
  EXPECT_EQ(read_text(dir / "a.csv").substr(0, 20), "step,loss,sigma_mean");
}

TEST(Train, InitialLossFiniteAndOrderOne) {
  const auto songs = data::synthetic_corpus(4, 3, 8);
  TrainOptions opt;
  opt.steps = 1;
  opt.batch = 8;
  HourglassNet net(small_config());
  const auto t = train_toy(net, songs, opt);
  EXPECT_TRUE(std::isfinite(t[0].loss));
  EXPECT_GT(t[0].loss, 0.05);
  EXPECT_LT(t[0].loss, 20.0);
}

TEST(Train, EmptyDatasetRejected) {
  HourglassNet net(small_config());
  EXPECT_THROW(train_toy(net, {}, {}), DataError);
}

TEST(Train, LossDecreasesOnShortRun) {
  const auto songs = data::synthetic_corpus(8, 3, 8);
  TrainOptions opt;
  opt.steps = 120;
  opt.batch = 4;
  opt.lr = 3e-3;
  HourglassNet net(small_config());
  const auto t = train_toy(net, songs, opt);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += t[static_cast<std::size_t>(i)].loss;
    last += t[t.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  EXPECT_LT(last, first);
}

TEST(Train, CheckpointWrittenAtEnd) {
  testing::TempDir dir;
  TrainOptions opt;
  opt.steps = 2;
  opt.batch = 1;
  opt.checkpoint_path = dir / "m.pomck";
  HourglassNet net(small_config());
  train_toy(net, data::synthetic_corpus(2, 1, 4), opt);
  EXPECT_EQ(read_checkpoint(dir / "m.pomck").step, 2);
}

TEST(GaussianDenoiser, IsBayesPosteriorMean) {
  // Bin (x0 + sigma eps) and compare the empirical E[x0 | y] with the formula.
  const double mu = 0.5, s2 = 2.0, sigma = 1.5;
  const AnalyticGaussianDenoiser d(mu, s2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  double sum = 0;
  int count = 0;
  for (int i = 0; i < 400000; ++i) {
    const double x0 = mu + std::sqrt(s2) * n(rng);
    const double y = x0 + sigma * n(rng);
    if (std::abs(y - 1.7) < 0.05) {
      sum += x0;
      ++count;
    }
  }
  Raster y({1, 1, 1}, 1.7f);
  const double expect = d(y, sigma)[0];
  const double sd = std::sqrt(s2 * sigma * sigma / (s2 + sigma * sigma)) / std::sqrt(count);
  EXPECT_NEAR(sum / count, expect, 4 * sd + 0.02);
  EXPECT_NEAR(AnalyticGaussianDenoiser(0, 1)(Raster({1, 1, 1}, 2.0f), 1.0)[0], 1.0, 1e-6);
  EXPECT_NEAR(d(y, 1e6)[0], mu, 1e-5);
}

}  // namespace
}  // namespace pom
