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
#include <stdexcept>
#include <string>

#include "pom/diffusion/mask.hpp"
#include "pom/diffusion/sampler.hpp"

namespace pom {

struct RepaintParams {
  int repaints = 1;  // U; 1 means plain masked sampling
};

namespace detail {

// keep region <- x_ref + sigma * eps; generate region untouched.
inline void impose_known(Raster& x, const Raster& x_ref, const Mask& mask, double sigma, NoiseSource& noise) {
  const int plane = x.plane();
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double eps = noise.normal();
    if (!mask[j % plane]) x[j] = static_cast<float>(x_ref[j] + sigma * eps);
  }
}

}  // namespace detail

/// Pushes a sample at sigma_next back to sigma with fresh noise of variance
/// sigma^2 - sigma_next^2, so a marginal of variance v + sigma_next^2 becomes
/// v + sigma^2.
inline void renoise_back(Raster& x, double sigma, double sigma_next, NoiseSource& noise) {
  if (sigma_next > sigma) throw std::invalid_argument("renoise_back: sigma_next exceeds sigma");
  const double jump = std::sqrt(sigma * sigma - sigma_next * sigma_next);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(x[j] + jump * noise.normal());
}

/// Masked sampling with RePaint loops in Karras sigma space.
///
/// Each schedule step i is attempted U times. Before every attempt the keep
/// region is replaced by the reference noised to sigma_i; after every attempt
/// but the last, the sample is pushed back from sigma_{i+1} to sigma_i with
/// fresh noise of variance sigma_i^2 - sigma_{i+1}^2, and the solver's
/// multistep history is dropped. The result equals x_ref on the keep region.
///
/// Noise streams are derived from `seed`: with an all-generate mask and U = 1
/// the output matches sample_dpmpp_2m_sde(model, sigma_max * init, schedule,
/// eta, solver) using the init and solver streams of the same seed.
inline Raster inpaint_sample(const Denoiser& model, const Raster& x_ref, const Mask& mask,
                             const SigmaSchedule& schedule, RepaintParams repaint, double eta, std::uint64_t seed) {
  if (!mask.matches(x_ref.shape()))
    throw std::invalid_argument("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                                " does not match sample " + x_ref.shape().str());
  if (repaint.repaints < 1) throw std::invalid_argument("repaints (U) must be >= 1");

  auto init_noise = make_noise(seed, NoiseStream::init);
  auto solver_noise = make_noise(seed, NoiseStream::solver);
  auto keep_noise = make_noise(seed, NoiseStream::keep);
  auto renoise = make_noise(seed, NoiseStream::renoise);

  Raster x = init_noise.normal(x_ref.shape());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(schedule.sigmas.front() * x[j]);

  const bool all_generate = mask.area() == mask.size();
  Dpmpp2mSdeStepper stepper(model, eta, solver_noise);
  for (int i = 0; i < schedule.steps(); ++i) {
    const double sigma = schedule[i], sigma_next = schedule[i + 1];
    for (int u = 0; u < repaint.repaints; ++u) {
      if (!all_generate) detail::impose_known(x, x_ref, mask, sigma, keep_noise);
      stepper.step(x, sigma, sigma_next, i);
      if (u + 1 < repaint.repaints) {
        renoise_back(x, sigma, sigma_next, renoise);
        stepper.reset_history();
      }
    }
  }

  const int plane = x.plane();
  for (std::size_t j = 0; j < x.size(); ++j)
    if (!mask[j % plane]) x[j] = x_ref[j];
  return x;
}

}  // namespace pom
