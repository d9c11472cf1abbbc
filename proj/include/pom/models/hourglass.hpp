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
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pom/diffusion/denoiser.hpp"
#include "pom/error.hpp"
#include "pom/nn/autograd.hpp"

namespace pom {

/// Desk-scale hourglass transformer: patchify, token-merge down through the
/// levels with skip connections, global attention at the bottleneck, then
/// token-split back up and unpatchify.
struct HourglassConfig {
  int image_size = 64;
  int channels = 3;
  int patch = 2;
  std::vector<int> widths = {32, 64, 128};
  std::vector<int> depths = {1, 1, 2};
  int heads = 4;
  double sigma_data = 0.5;
  int cond_dim = 64;
  int fourier_features = 16;
  bool pos_embed = true;
  std::uint64_t init_seed = 0;

  int levels() const { return static_cast<int>(widths.size()); }
  int grid(int level) const { return image_size / patch >> level; }

  void validate() const {
    if (widths.empty() || widths.size() != depths.size())
      throw UsageError("hourglass: widths and depths must be non-empty and equal length");
    if (image_size <= 0 || patch <= 0) throw UsageError("hourglass: sizes must be positive");
    const int unit = patch << (levels() - 1);
    if (image_size % unit != 0)
      throw UsageError("hourglass: image size " + std::to_string(image_size) + " not divisible by patch*2^(levels-1) = " +
                       std::to_string(unit));
    if (widths.back() % heads != 0) throw UsageError("hourglass: bottleneck width must be divisible by heads");
    if (fourier_features % 2 != 0) throw UsageError("hourglass: fourier_features must be even");
    if (!(sigma_data > 0)) throw UsageError("hourglass: sigma_data must be positive");
  }

  nlohmann::json to_json() const {
    return {{"image_size", image_size}, {"channels", channels}, {"patch", patch}, {"widths", widths},
            {"depths", depths}, {"heads", heads}, {"sigma_data", sigma_data}, {"cond_dim", cond_dim},
            {"fourier_features", fourier_features}, {"pos_embed", pos_embed}, {"init_seed", init_seed}};
  }

  static HourglassConfig from_json(const nlohmann::json& j) {
    HourglassConfig c;
    c.image_size = j.at("image_size");
    c.channels = j.at("channels");
    c.patch = j.at("patch");
    c.widths = j.at("widths").get<std::vector<int>>();
    c.depths = j.at("depths").get<std::vector<int>>();
    c.heads = j.at("heads");
    c.sigma_data = j.at("sigma_data");
    c.cond_dim = j.at("cond_dim");
    c.fourier_features = j.at("fourier_features");
    c.pos_embed = j.at("pos_embed");
    c.init_seed = j.at("init_seed");
    c.validate();
    return c;
  }

  Shape shape() const { return {channels, image_size, image_size}; }
  friend bool operator==(const HourglassConfig&, const HourglassConfig&) = default;
};

/// EDM preconditioning coefficients.
struct Precond {
  double c_skip, c_out, c_in, c_noise;

  static Precond at(double sigma, double sigma_data) {
    const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2), 1.0 / std::sqrt(s2 + d2), std::log(sigma) / 4.0};
  }
};

struct Parameter {
  std::string name;
  nn::Var var;
};

class HourglassNet {
 public:
  explicit HourglassNet(HourglassConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.init_seed);
    build(rng);
  }

  const HourglassConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.var->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var->grad.resize(0, 0);
  }

  /// F(c_in * x, c_noise). `input` is [B, C*H*W] (one planar image per row).
  nn::Var forward(nn::Tape& tape, const nn::Var& input, const std::vector<double>& c_noise) const {
    using namespace nn;
    const Eigen::Index batch = input->value.rows();
    if (static_cast<Eigen::Index>(c_noise.size()) != batch) throw std::invalid_argument("c_noise size != batch");
    if (input->value.cols() != static_cast<Eigen::Index>(config_.shape().size()))
      throw std::invalid_argument("hourglass: input size mismatch");

    Var cond = condition(tape, c_noise);
    Var x = gather(tape, input, patchify_map(batch));
    x = linear(tape, x, p("patch_in.w"), p("patch_in.b"));
    if (config_.pos_embed) x = add_tiled(tape, x, p("pos_embed"));

    const int levels = config_.levels();
    std::vector<Var> skips;
    for (int l = 0; l + 1 < levels; ++l) {
      for (int d = 0; d < config_.depths[l]; ++d) x = mlp_block(tape, x, cond, "down" + std::to_string(l) + "." + std::to_string(d), l);
      skips.push_back(x);
      x = gather(tape, x, merge_map(batch, l));
      x = linear(tape, x, p("merge" + std::to_string(l) + ".w"), p("merge" + std::to_string(l) + ".b"));
    }
    for (int d = 0; d < config_.depths.back(); ++d) x = attn_block(tape, x, cond, "mid." + std::to_string(d), levels - 1);
    for (int l = levels - 2; l >= 0; --l) {
      x = linear(tape, x, p("split" + std::to_string(l) + ".w"), p("split" + std::to_string(l) + ".b"));
      x = gather(tape, x, split_map(batch, l));
      x = add(tape, x, skips[static_cast<std::size_t>(l)]);
      for (int d = 0; d < config_.depths[l]; ++d) x = mlp_block(tape, x, cond, "up" + std::to_string(l) + "." + std::to_string(d), l);
    }
    x = rms_norm(tape, x, nullptr, tokens(0));
    x = linear(tape, x, p("patch_out.w"), p("patch_out.b"));
    return gather(tape, x, unpatchify_map(batch));
  }

 private:
  Eigen::Index tokens(int level) const {
    const Eigen::Index g = config_.grid(level);
    return g * g;
  }

  const nn::Var& p(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("missing parameter " + name);
    return params_[it->second].var;
  }

  void add_param(const std::string& name, nn::Matrix value) {
    index_[name] = params_.size();
    params_.push_back({name, nn::leaf(std::move(value), true)});
  }

  void add_linear(std::mt19937_64& rng, const std::string& name, int in, int out, bool zero = false) {
    nn::Matrix w = nn::Matrix::Zero(in, out);
    if (!zero) {
      const float a = std::sqrt(6.0f / static_cast<float>(in + out));
      std::uniform_real_distribution<float> u(-a, a);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    }
    add_param(name + ".w", std::move(w));
    add_param(name + ".b", nn::Matrix::Zero(1, out));
  }

  void build(std::mt19937_64& rng) {
    const auto& c = config_;
    const int patch_dim = c.channels * c.patch * c.patch;
    add_linear(rng, "cond.fc1", c.fourier_features, c.cond_dim);
    add_linear(rng, "cond.fc2", c.cond_dim, c.cond_dim);
    add_linear(rng, "patch_in", patch_dim, c.widths[0]);
    if (c.pos_embed) {
      nn::Matrix pe(tokens(0), c.widths[0]);
      std::normal_distribution<float> n(0.0f, 0.02f);
      for (Eigen::Index i = 0; i < pe.size(); ++i) pe.data()[i] = n(rng);
      add_param("pos_embed", std::move(pe));
    }
    const int levels = c.levels();
    auto mlp = [&](const std::string& name, int width) {
      add_linear(rng, name + ".mod", c.cond_dim, width, true);
      add_linear(rng, name + ".fc1", width, 2 * width);
      add_linear(rng, name + ".fc2", 2 * width, width);
    };
    for (int l = 0; l + 1 < levels; ++l) {
      for (int d = 0; d < c.depths[l]; ++d) mlp("down" + std::to_string(l) + "." + std::to_string(d), c.widths[l]);
      add_linear(rng, "merge" + std::to_string(l), 4 * c.widths[l], c.widths[l + 1]);
    }
    for (int d = 0; d < c.depths.back(); ++d) {
      const std::string name = "mid." + std::to_string(d);
      const int w = c.widths.back();
      add_linear(rng, name + ".attn_mod", c.cond_dim, w, true);
      add_linear(rng, name + ".qkv", w, 3 * w);
      add_linear(rng, name + ".proj", w, w);
      mlp(name + ".mlp", w);
    }
    for (int l = levels - 2; l >= 0; --l) {
      add_linear(rng, "split" + std::to_string(l), c.widths[l + 1], 4 * c.widths[l]);
      for (int d = 0; d < c.depths[l]; ++d) mlp("up" + std::to_string(l) + "." + std::to_string(d), c.widths[l]);
    }
    // Zero output projection: F = 0 at init, so the model starts as c_skip * x.
    add_linear(rng, "patch_out", c.widths[0], patch_dim, true);

    freqs_.resize(static_cast<std::size_t>(c.fourier_features / 2));
    for (std::size_t k = 0; k < freqs_.size(); ++k)
      freqs_[k] = std::pow(64.0, static_cast<double>(k) / std::max<std::size_t>(1, freqs_.size() - 1)) * 0.5;
  }

  nn::Var condition(nn::Tape& tape, const std::vector<double>& c_noise) const {
    using namespace nn;
    const auto half = static_cast<Eigen::Index>(freqs_.size());
    Matrix f(static_cast<Eigen::Index>(c_noise.size()), 2 * half);
    for (std::size_t b = 0; b < c_noise.size(); ++b)
      for (Eigen::Index k = 0; k < half; ++k) {
        const double arg = std::numbers::pi * freqs_[static_cast<std::size_t>(k)] * c_noise[b];
        f(static_cast<Eigen::Index>(b), k) = static_cast<float>(std::cos(arg));
        f(static_cast<Eigen::Index>(b), half + k) = static_cast<float>(std::sin(arg));
      }
    Var x = leaf(std::move(f));
    x = gelu(tape, linear(tape, x, p("cond.fc1.w"), p("cond.fc1.b")));
    return gelu(tape, linear(tape, x, p("cond.fc2.w"), p("cond.fc2.b")));
  }

  nn::Var mlp_block(nn::Tape& tape, const nn::Var& x, const nn::Var& cond, const std::string& name, int level) const {
    using namespace nn;
    Var scale = linear(tape, cond, p(name + ".mod.w"), p(name + ".mod.b"));
    Var h = rms_norm(tape, x, &scale, tokens(level));
    h = gelu(tape, linear(tape, h, p(name + ".fc1.w"), p(name + ".fc1.b")));
    h = linear(tape, h, p(name + ".fc2.w"), p(name + ".fc2.b"));
    return add(tape, x, h);
  }

  nn::Var attn_block(nn::Tape& tape, const nn::Var& x, const nn::Var& cond, const std::string& name, int level) const {
    using namespace nn;
    Var scale = linear(tape, cond, p(name + ".attn_mod.w"), p(name + ".attn_mod.b"));
    Var h = rms_norm(tape, x, &scale, tokens(level));
    h = linear(tape, h, p(name + ".qkv.w"), p(name + ".qkv.b"));
    h = attention(tape, h, tokens(level), config_.heads);
    h = linear(tape, h, p(name + ".proj.w"), p(name + ".proj.b"));
    return mlp_block(tape, add(tape, x, h), cond, name + ".mlp", level);
  }

  // --- index maps (cached per batch size) ---

  using MapPtr = std::shared_ptr<const nn::GatherMap>;

  MapPtr cached(const std::string& key, const std::function<nn::GatherMap()>& build_map) const {
    std::lock_guard lock(cache_mu_);
    auto it = maps_.find(key);
    if (it != maps_.end()) return it->second;
    auto map = std::make_shared<const nn::GatherMap>(build_map());
    maps_.emplace(key, map);
    return map;
  }

  // image row [b, c*H*W + y*W + x] -> token (b, ty, tx), feature (c, py, px)
  nn::GatherMap patchify_index(Eigen::Index batch) const {
    const int s = config_.image_size, pch = config_.patch, ch = config_.channels, g = config_.grid(0);
    const Eigen::Index feat = static_cast<Eigen::Index>(ch) * pch * pch;
    nn::GatherMap m{batch * g * g, feat, {}};
    m.index.resize(static_cast<std::size_t>(m.rows * m.cols));
    const Eigen::Index img = static_cast<Eigen::Index>(ch) * s * s;
    std::size_t j = 0;
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int ty = 0; ty < g; ++ty)
        for (int tx = 0; tx < g; ++tx)
          for (int c = 0; c < ch; ++c)
            for (int py = 0; py < pch; ++py)
              for (int px = 0; px < pch; ++px)
                m.index[j++] = b * img + (static_cast<Eigen::Index>(c) * s + ty * pch + py) * s + tx * pch + px;
    return m;
  }

  MapPtr patchify_map(Eigen::Index batch) const {
    return cached("patchify/" + std::to_string(batch), [&] { return patchify_index(batch); });
  }

  MapPtr unpatchify_map(Eigen::Index batch) const {
    return cached("unpatchify/" + std::to_string(batch), [&] {
      const auto fwd = patchify_index(batch);
      nn::GatherMap m{batch, static_cast<Eigen::Index>(config_.shape().size()), {}};
      m.index.resize(fwd.index.size());
      for (std::size_t j = 0; j < fwd.index.size(); ++j) m.index[static_cast<std::size_t>(fwd.index[j])] = static_cast<Eigen::Index>(j);
      return m;
    });
  }

  // [B*g*g, C] -> [B*(g/2)^2, 4C]; feature block k = dy*2 + dx.
  nn::GatherMap merge_index(Eigen::Index batch, int level) const {
    const int g = config_.grid(level), h = g / 2, w = config_.widths[static_cast<std::size_t>(level)];
    nn::GatherMap m{batch * h * h, 4 * static_cast<Eigen::Index>(w), {}};
    m.index.resize(static_cast<std::size_t>(m.rows * m.cols));
    std::size_t j = 0;
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < h; ++x)
          for (int k = 0; k < 4; ++k)
            for (int c = 0; c < w; ++c) {
              const Eigen::Index row = b * g * g + static_cast<Eigen::Index>(2 * y + k / 2) * g + 2 * x + k % 2;
              m.index[j++] = row * w + c;
            }
    return m;
  }

  MapPtr merge_map(Eigen::Index batch, int level) const {
    return cached("merge" + std::to_string(level) + "/" + std::to_string(batch), [&] { return merge_index(batch, level); });
  }

  MapPtr split_map(Eigen::Index batch, int level) const {
    return cached("split" + std::to_string(level) + "/" + std::to_string(batch), [&] {
      const auto fwd = merge_index(batch, level);
      const int g = config_.grid(level), w = config_.widths[static_cast<std::size_t>(level)];
      nn::GatherMap m{batch * g * g, w, {}};
      m.index.resize(fwd.index.size());
      for (std::size_t j = 0; j < fwd.index.size(); ++j) m.index[static_cast<std::size_t>(fwd.index[j])] = static_cast<Eigen::Index>(j);
      return m;
    });
  }

  HourglassConfig config_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> freqs_;
  mutable std::mutex cache_mu_;
  mutable std::map<std::string, MapPtr> maps_;
};

/// Flattens rasters into model rows: [B, C*H*W].
inline nn::Matrix stack_rows(const std::vector<const Raster*>& xs, double scale = 1.0) {
  nn::Matrix m(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs.front()->size()));
  for (std::size_t b = 0; b < xs.size(); ++b)
    for (std::size_t i = 0; i < xs[b]->size(); ++i)
      m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = static_cast<float>(scale * (*xs[b])[i]);
  return m;
}

/// EDM-preconditioned wrapper: D(x, sigma) = c_skip x + c_out F(c_in x, c_noise).
class ToyDenoiser final : public Denoiser {
 public:
  explicit ToyDenoiser(std::shared_ptr<const HourglassNet> net) : net_(std::move(net)) {}

  const HourglassNet& net() const { return *net_; }

  Raster denoise(const Raster& x, double sigma) const override {
    const auto shape = net_->config().shape();
    if (x.shape() != shape) throw std::invalid_argument("toy model expects " + shape.str() + ", got " + x.shape().str());
    if (!(sigma > 0)) throw std::invalid_argument("toy model requires sigma > 0");
    const auto k = Precond::at(sigma, net_->config().sigma_data);
    nn::Tape tape(false);
    auto input = nn::leaf(stack_rows({&x}, k.c_in));
    const auto f = net_->forward(tape, input, {k.c_noise});
    Raster out(shape);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<float>(k.c_skip * x[i] + k.c_out * f->value(0, static_cast<Eigen::Index>(i)));
    return out;
  }

  std::optional<Shape> input_shape() const override { return net_->config().shape(); }
  std::string name() const override { return "toy-hourglass"; }

 private:
  std::shared_ptr<const HourglassNet> net_;
};

}  // namespace pom
