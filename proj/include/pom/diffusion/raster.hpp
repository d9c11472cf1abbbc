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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pom/error.hpp"
#include "pom/image.hpp"

namespace pom {

struct Shape {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Planar (CHW) float image in model space, nominally [-1, 1].
class Raster {
 public:
  Raster() = default;
  explicit Raster(Shape shape, float fill = 0.0f) : shape_(shape), data_(shape.size(), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  int plane() const { return shape_.height * shape_.width; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(int c, int r, int col) { return data_[(static_cast<std::size_t>(c) * shape_.height + r) * shape_.width + col]; }
  float at(int c, int r, int col) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + r) * shape_.width + col];
  }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

inline void require_same_shape(const Raster& a, const Raster& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

/// 8-bit RGB -> [-1, 1].
inline Raster to_raster(const RgbImage& img) {
  Raster out(Shape{3, img.height(), img.width()});
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      const auto& px = img.at(r, c);
      out.at(0, r, c) = px.r / 127.5f - 1.0f;
      out.at(1, r, c) = px.g / 127.5f - 1.0f;
      out.at(2, r, c) = px.b / 127.5f - 1.0f;
    }
  return out;
}

inline std::uint8_t to_level(float v) {
  if (!std::isfinite(v)) return 0;
  return static_cast<std::uint8_t>(std::clamp(std::lround((static_cast<double>(v) + 1.0) * 127.5), 0L, 255L));
}

inline RgbImage to_image(const Raster& x) {
  if (x.shape().channels != 3) throw std::invalid_argument("to_image expects 3 channels");
  RgbImage img(x.shape().width, x.shape().height);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      img.at(r, c) = {to_level(x.at(0, r, c)), to_level(x.at(1, r, c)), to_level(x.at(2, r, c))};
  return img;
}

}  // namespace pom
