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

#include <cstdint>
#include <random>

#include "pom/diffusion/raster.hpp"

namespace pom {

/// Seeded standard-normal source. Distinct stream ids give independent
/// sequences from one job seed.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double normal() { return dist_(engine_); }

  Raster normal(const Shape& shape) {
    Raster out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(dist_(engine_));
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Stream ids used by the inpainting loop.
enum class NoiseStream : std::uint64_t { init = 1, solver = 2, keep = 3, renoise = 4 };

inline NoiseSource make_noise(std::uint64_t seed, NoiseStream stream) {
  return NoiseSource(seed, static_cast<std::uint64_t>(stream));
}

/// x0 + sigma * eps.
inline Raster add_noise(const Raster& x0, double sigma, const Raster& eps) {
  require_same_shape(x0, eps, "add_noise");
  Raster out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(x0[i] + sigma * eps[i]);
  return out;
}

inline Raster add_noise(const Raster& x0, double sigma, NoiseSource& rng) {
  return add_noise(x0, sigma, rng.normal(x0.shape()));
}

}  // namespace pom
