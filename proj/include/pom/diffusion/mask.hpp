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
#include <string>
#include <vector>

#include "pom/diffusion/raster.hpp"
#include "pom/image.hpp"

namespace pom {

/// Binary raster: 1 = generate (inpaint), 0 = keep.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool generate(int row, int col) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int row, int col, bool on) { bits_[static_cast<std::size_t>(row) * width_ + col] = on ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  std::size_t area() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  bool matches(const Shape& s) const { return s.height == height_ && s.width == width_; }

  /// Grayscale convention: >= 128 means generate.
  static Mask from_gray(const GrayImage& img) {
    Mask m(img.height(), img.width());
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c) m.set(r, c, img.at(r, c) >= 128);
    return m;
  }

  GrayImage to_gray() const {
    GrayImage img(width_, height_);
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c) img.at(r, c) = generate(r, c) ? 255 : 0;
    return img;
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace pom
