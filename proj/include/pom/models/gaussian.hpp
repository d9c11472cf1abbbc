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

#include <optional>
#include <stdexcept>
#include <string>

#include "pom/diffusion/denoiser.hpp"

namespace pom {

/// Posterior mean under an independent Gaussian prior N(mean, variance) per pixel:
/// D(x, sigma) = mean + variance / (variance + sigma^2) * (x - mean).
class AnalyticGaussianDenoiser final : public Denoiser {
 public:
  /// Scalar prior applied to any input shape.
  AnalyticGaussianDenoiser(double mean, double variance) : scalar_mean_(mean), scalar_var_(variance) {
    if (!(variance > 0)) throw std::invalid_argument("prior variance must be positive");
  }

  /// Per-pixel prior; inputs must match its shape.
  AnalyticGaussianDenoiser(Raster mean, Raster variance) : mean_(std::move(mean)), var_(std::move(variance)) {
    require_same_shape(*mean_, *var_, "AnalyticGaussianDenoiser");
    for (float v : var_->values())
      if (!(v > 0)) throw std::invalid_argument("prior variance must be positive");
  }

  Raster denoise(const Raster& x, double sigma) const override {
    if (sigma < 0) throw std::invalid_argument("sigma must be >= 0");
    Raster out(x.shape());
    const double s2 = sigma * sigma;
    if (mean_) {
      require_same_shape(x, *mean_, "AnalyticGaussianDenoiser");
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = (*var_)[i];
        out[i] = static_cast<float>((*mean_)[i] + v / (v + s2) * (x[i] - (*mean_)[i]));
      }
    } else {
      const double k = scalar_var_ / (scalar_var_ + s2);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(scalar_mean_ + k * (x[i] - scalar_mean_));
    }
    return out;
  }

  std::optional<Shape> input_shape() const override {
    if (mean_) return mean_->shape();
    return std::nullopt;
  }

  std::string name() const override { return "analytic-gaussian"; }

 private:
  double scalar_mean_ = 0.0;
  double scalar_var_ = 1.0;
  std::optional<Raster> mean_;
  std::optional<Raster> var_;
};

}  // namespace pom
