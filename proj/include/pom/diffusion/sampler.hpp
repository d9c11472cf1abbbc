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
#include <optional>
#include <string>

#include "pom/diffusion/denoiser.hpp"
#include "pom/diffusion/noise.hpp"
#include "pom/diffusion/schedule.hpp"
#include "pom/error.hpp"

namespace pom {

namespace detail {

inline Raster checked_denoise(const Denoiser& model, const Raster& x, double sigma, int step) {
  Raster d = model(x, sigma);
  if (d.shape() != x.shape())
    throw ModelError("denoiser changed shape at step " + std::to_string(step) + ": " + d.shape().str());
  if (!d.all_finite())
    throw ModelError("denoiser produced non-finite values at step " + std::to_string(step) +
                     " (sigma=" + std::to_string(sigma) + ")");
  return d;
}

}  // namespace detail

/// Deterministic DPM-Solver++(2M) in data-prediction form, with t = -ln(sigma).
inline Raster sample_dpmpp_2m(const Denoiser& model, Raster x, const SigmaSchedule& schedule) {
  const auto& s = schedule.sigmas;
  std::optional<Raster> old_denoised;
  double h_last = 0.0;
  for (int i = 0; i + 1 < static_cast<int>(s.size()); ++i) {
    const Raster d = detail::checked_denoise(model, x, s[i], i);
    if (s[i + 1] == 0.0) {
      // exp(-h) -> 0: the update collapses onto the denoised estimate.
      x = d;
      break;
    }
    const double h = std::log(s[i] / s[i + 1]);
    const double a = s[i + 1] / s[i];
    const double b = std::expm1(-h);
    if (!old_denoised) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(a * x[j] - b * d[j]);
    } else {
      const double r = h_last / h;
      const double c0 = 1.0 + 1.0 / (2.0 * r), c1 = 1.0 / (2.0 * r);
      const Raster& od = *old_denoised;
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(a * x[j] - b * (c0 * d[j] - c1 * od[j]));
    }
    old_denoised = d;
    h_last = h;
  }
  return x;
}

/// One-step-at-a-time stochastic DPM-Solver++(2M) (midpoint correction). The
/// injected noise keeps the marginal variance at the next sigma; eta = 0
/// recovers the deterministic solver.
class Dpmpp2mSdeStepper {
 public:
  Dpmpp2mSdeStepper(const Denoiser& model, double eta, NoiseSource& noise)
      : model_(model), eta_(eta), noise_(noise) {
    if (eta < 0) throw std::invalid_argument("eta must be >= 0");
  }

  /// Forget D_{i-1}; the next step is first order.
  void reset_history() { old_denoised_.reset(); }

  void step(Raster& x, double sigma, double sigma_next, int index) {
    const Raster d = detail::checked_denoise(model_, x, sigma, index);
    if (sigma_next == 0.0) {
      x = d;
      old_denoised_.reset();
      return;
    }
    const double h = std::log(sigma / sigma_next);
    const double eta_h = eta_ * h;
    const double decay = (sigma_next / sigma) * std::exp(-eta_h);
    const double gain = -std::expm1(-h - eta_h);
    if (!old_denoised_) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(decay * x[j] + gain * d[j]);
    } else {
      const double corr = 0.5 * gain * (h / h_last_);
      const Raster& od = *old_denoised_;
      for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = static_cast<float>(decay * x[j] + gain * d[j] + corr * (d[j] - od[j]));
    }
    if (eta_ > 0) {
      const double scale = sigma_next * std::sqrt(-std::expm1(-2.0 * eta_h));
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(x[j] + scale * noise_.normal());
    }
    old_denoised_ = d;
    h_last_ = h;
  }

 private:
  const Denoiser& model_;
  double eta_;
  NoiseSource& noise_;
  std::optional<Raster> old_denoised_;
  double h_last_ = 0.0;
};

inline Raster sample_dpmpp_2m_sde(const Denoiser& model, Raster x, const SigmaSchedule& schedule, double eta,
                                  NoiseSource& rng) {
  Dpmpp2mSdeStepper stepper(model, eta, rng);
  for (int i = 0; i < schedule.steps(); ++i) stepper.step(x, schedule[i], schedule[i + 1], i);
  return x;
}

}  // namespace pom
