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
#include <stdexcept>
#include <string>
#include <vector>

namespace pom {

inline constexpr double kSigmaMax = 160.0;
inline constexpr double kSigmaMin = 0.01;
inline constexpr double kRho = 7.0;
inline constexpr int kDefaultSteps = 50;

/// Descending noise levels; sigmas.back() == 0.
struct SigmaSchedule {
  std::vector<double> sigmas;
  double sigma_min = kSigmaMin;
  double sigma_max = kSigmaMax;
  double rho = kRho;

  int steps() const { return static_cast<int>(sigmas.size()) - 1; }
  double operator[](std::size_t i) const { return sigmas[i]; }
};

/// Karras rho-schedule: n levels interpolated in sigma^(1/rho), then a terminal 0.
inline SigmaSchedule karras_schedule(int n = kDefaultSteps, double sigma_min = kSigmaMin,
                                     double sigma_max = kSigmaMax, double rho = kRho) {
  if (n < 2) throw std::invalid_argument("schedule needs at least 2 steps, got " + std::to_string(n));
  if (!(sigma_min > 0) || !(sigma_min < sigma_max))
    throw std::invalid_argument("schedule requires 0 < sigma_min < sigma_max");
  if (!(rho > 0)) throw std::invalid_argument("rho must be positive");
  SigmaSchedule s{{}, sigma_min, sigma_max, rho};
  s.sigmas.reserve(n + 1);
  const double hi = std::pow(sigma_max, 1.0 / rho);
  const double lo = std::pow(sigma_min, 1.0 / rho);
  for (int i = 0; i < n; ++i) s.sigmas.push_back(std::pow(hi + (static_cast<double>(i) / (n - 1)) * (lo - hi), rho));
  // Pin the endpoints; pow(pow(x, 1/rho), rho) is not exact in floating point.
  s.sigmas.front() = sigma_max;
  s.sigmas.back() = sigma_min;
  s.sigmas.push_back(0.0);
  return s;
}

/// RePaint noise fraction in Karras sigma space: (sigma / sigma_max)^2.
inline double beta_from_sigma(double sigma, double sigma_max = kSigmaMax) {
  if (!(sigma_max > 0)) throw std::invalid_argument("sigma_max must be positive");
  if (sigma < 0 || sigma > sigma_max)
    throw std::invalid_argument("sigma " + std::to_string(sigma) + " outside [0, sigma_max]");
  const double ratio = sigma / sigma_max;
  return ratio * ratio;
}

}  // namespace pom
