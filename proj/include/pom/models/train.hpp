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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <string>
#include <vector>

#include "pom/data/dataset.hpp"
#include "pom/diffusion/noise.hpp"
#include "pom/domain.hpp"
#include "pom/models/checkpoint.hpp"
#include "pom/models/hourglass.hpp"

namespace pom {

/// One minibatch of the EDM objective: clean images, per-sample sigma, noise.
struct LossBatch {
  nn::Matrix clean;  // [B, C*H*W]
  nn::Matrix noise;  // [B, C*H*W]
  std::vector<double> sigmas;
};

/// E[lambda(sigma) |D(x + sigma eps) - x|^2] with lambda = 1 / c_out^2,
/// written in its equivalent network-target form |F - (x - c_skip y) / c_out|^2.
inline nn::Var edm_loss(const HourglassNet& net, nn::Tape& tape, const LossBatch& batch) {
  const double sd = net.config().sigma_data;
  const Eigen::Index rows = batch.clean.rows(), cols = batch.clean.cols();
  nn::Matrix input(rows, cols), target(rows, cols);
  std::vector<double> c_noise(static_cast<std::size_t>(rows));
  for (Eigen::Index b = 0; b < rows; ++b) {
    const double sigma = batch.sigmas[static_cast<std::size_t>(b)];
    const auto k = Precond::at(sigma, sd);
    c_noise[static_cast<std::size_t>(b)] = k.c_noise;
    for (Eigen::Index i = 0; i < cols; ++i) {
      const double x = batch.clean(b, i);
      const double y = x + sigma * batch.noise(b, i);
      input(b, i) = static_cast<float>(k.c_in * y);
      target(b, i) = static_cast<float>((x - k.c_skip * y) / k.c_out);
    }
  }
  auto f = net.forward(tape, nn::leaf(std::move(input)), c_noise);
  return nn::mse(tape, f, target);
}

class Adam {
 public:
  Adam(std::vector<Parameter>& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(nn::Matrix::Zero(p.var->value.rows(), p.var->value.cols()));
      v_.push_back(nn::Matrix::Zero(p.var->value.rows(), p.var->value.cols()));
    }
  }

  void step() {
    ++t_;
    const float c1 = static_cast<float>(1.0 - std::pow(beta1_, t_));
    const float c2 = static_cast<float>(1.0 - std::pow(beta2_, t_));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& node = *params_[i].var;
      if (node.grad.size() == 0) continue;
      m_[i] = b1 * m_[i] + (1.0f - b1) * node.grad;
      v_[i] = b2 * v_[i] + (1.0f - b2) * node.grad.cwiseAbs2();
      node.value.array() -= static_cast<float>(lr_) * (m_[i].array() / c1) /
                            ((v_[i].array() / c2).sqrt() + static_cast<float>(eps_));
    }
  }

 private:
  std::vector<Parameter>& params_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<nn::Matrix> m_, v_;
};

struct TrainOptions {
  int steps = 2000;
  int batch = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double log_sigma_mean = -1.2;
  double log_sigma_std = 1.2;
  int checkpoint_every = 0;  // 0: only at the end
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_csv;
};

struct LossRecord {
  int step = 0;
  double loss = 0;
  double sigma_mean = 0;
};

/// Loads every 128-row PNG in a directory as a training song.
inline std::vector<data::SongRaster> load_songs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<data::SongRaster> songs;
  for (const auto& f : files) {
    auto img = png::read_rgb(f);
    if (img.height() != kRollHeight) {
      log::warn("skipping " + f.string() + ": not 128 rows tall");
      continue;
    }
    const int width = img.width();
    songs.push_back({f.stem().string(), std::move(img), width, f});
  }
  return songs;
}

/// Draws a training batch: random song, random window, domain mapping, sigma and noise.
template <class Rng>
LossBatch draw_batch(const std::vector<data::SongRaster>& songs, const RollDomain& domain, int batch, Rng& rng,
                     NoiseSource& noise, double log_mean, double log_std) {
  std::uniform_int_distribution<std::size_t> pick(0, songs.size() - 1);
  std::normal_distribution<double> log_sigma(log_mean, log_std);
  const auto size = static_cast<Eigen::Index>(domain.model_shape().size());
  LossBatch out{nn::Matrix(batch, size), nn::Matrix(batch, size), {}};
  for (int b = 0; b < batch; ++b) {
    const auto& song = songs[pick(rng)];
    const Raster x = domain.to_model(data::window_random(song, rng, domain.roll_width()));
    for (Eigen::Index i = 0; i < size; ++i) {
      out.clean(b, i) = x[static_cast<std::size_t>(i)];
      out.noise(b, i) = static_cast<float>(noise.normal());
    }
    out.sigmas.push_back(std::exp(log_sigma(rng)));
  }
  return out;
}

/// Single-device EDM training with Adam. Reproducible for a fixed seed.
inline std::vector<LossRecord> train_toy(HourglassNet& net, const std::vector<data::SongRaster>& songs,
                                         const TrainOptions& opt,
                                         const std::function<void(const LossRecord&)>& on_step = {}) {
  if (songs.empty()) throw DataError("training set is empty");
  if (opt.steps < 1) throw UsageError("steps must be >= 1");
  if (opt.batch < 1) throw UsageError("batch must be >= 1");
  const auto domain = RollDomain::for_size(net.config().image_size);

  std::mt19937_64 rng(opt.seed);
  NoiseSource noise(opt.seed, 0x7e57);
  Adam adam(net.parameters(), opt.lr);
  std::vector<LossRecord> trace;
  std::ofstream csv;
  if (!opt.loss_csv.empty()) {
    if (opt.loss_csv.has_parent_path()) std::filesystem::create_directories(opt.loss_csv.parent_path());
    csv.open(opt.loss_csv);
    csv << std::setprecision(9) << "step,loss,sigma_mean\n";
  }

  for (int step = 1; step <= opt.steps; ++step) {
    const auto batch = draw_batch(songs, domain, opt.batch, rng, noise, opt.log_sigma_mean, opt.log_sigma_std);
    net.zero_grad();
    nn::Tape tape;
    const auto loss = edm_loss(net, tape, batch);
    const double value = loss->value(0, 0);
    if (!std::isfinite(value)) throw ModelError("non-finite training loss at step " + std::to_string(step));
    tape.backward(loss);
    adam.step();

    double sigma_mean = 0;
    for (double s : batch.sigmas) sigma_mean += s;
    sigma_mean /= static_cast<double>(batch.sigmas.size());
    LossRecord rec{step, value, sigma_mean};
    trace.push_back(rec);
    if (csv.is_open()) csv << rec.step << ',' << rec.loss << ',' << rec.sigma_mean << '\n';
    if (on_step) on_step(rec);
    if (!opt.checkpoint_path.empty() && opt.checkpoint_every > 0 && step % opt.checkpoint_every == 0)
      save_checkpoint(net, step, opt.checkpoint_path);
  }
  if (!opt.checkpoint_path.empty()) save_checkpoint(net, opt.steps, opt.checkpoint_path);
  return trace;
}

}  // namespace pom
