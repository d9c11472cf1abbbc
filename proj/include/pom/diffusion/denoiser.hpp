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
#include <string>

#include "pom/diffusion/raster.hpp"

namespace pom {

/// D(x, sigma): estimate of the clean image given a noisy one. Output has the
/// input's shape. Implementations must be safe for concurrent const calls.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Raster denoise(const Raster& x, double sigma) const = 0;

  /// Fixed input shape, if the model has one.
  virtual std::optional<Shape> input_shape() const { return std::nullopt; }
  virtual std::string name() const = 0;

  Raster operator()(const Raster& x, double sigma) const { return denoise(x, sigma); }
};

}  // namespace pom
