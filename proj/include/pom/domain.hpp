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

#include <string>

#include "pom/codec/pianoroll.hpp"
#include "pom/diffusion/mask.hpp"
#include "pom/diffusion/raster.hpp"

namespace pom {

/// Maps a piano-roll window onto the square raster a denoiser works in.
///
/// Size 256 is the full window: 512 columns folded to 256x256. Smaller sizes
/// (desk-scale models) take the first `size` columns and a `size`-row pitch
/// band centred on the roll; everything outside that block is kept verbatim.
class RollDomain {
 public:
  static RollDomain for_size(int size) {
    if (size == kFoldedSize) return RollDomain(size, 0, true);
    if (size < 1 || size > kRollHeight)
      throw std::invalid_argument("no roll domain for model size " + std::to_string(size));
    return RollDomain(size, (kRollHeight - size) / 2, false);
  }

  bool folded() const { return folded_; }
  int size() const { return size_; }
  int roll_width() const { return folded_ ? kWindowWidth : size_; }
  int first_row() const { return row0_; }
  Shape model_shape() const { return {3, size_, size_}; }

  RgbImage model_image(const RgbImage& window) const {
    check_window(window);
    if (folded_) return fold(window);
    RgbImage out(size_, size_);
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c) out.at(r, c) = window.at(row0_ + r, c);
    return out;
  }

  Raster to_model(const RgbImage& window) const { return to_raster(model_image(window)); }

  /// Generated model raster back in roll coordinates; pixels outside the
  /// modelled block come from `window`.
  RgbImage to_roll(const Raster& x, const RgbImage& window) const {
    check_window(window);
    const RgbImage img = to_image(x);
    if (folded_) return unfold(img);
    RgbImage out = window;
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c) out.at(row0_ + r, c) = img.at(r, c);
    return out;
  }

  /// Roll-space mask (roll_width x 128) -> model-space mask. Roll pixels
  /// outside the modelled block are dropped (they are always kept).
  Mask to_model(const Mask& roll_mask) const {
    if (roll_mask.width() != roll_width() || roll_mask.height() != kRollHeight)
      throw DataError("mask is " + std::to_string(roll_mask.width()) + "x" + std::to_string(roll_mask.height()) +
                      ", domain expects " + std::to_string(roll_width()) + "x128");
    Mask out(size_, size_);
    if (folded_) {
      for (int r = 0; r < kRollHeight; ++r)
        for (int c = 0; c < kFoldedSize; ++c) {
          out.set(r, c, roll_mask.generate(r, c));
          out.set(r + kRollHeight, c, roll_mask.generate(r, kWindowWidth - 1 - c));
        }
    } else {
      for (int r = 0; r < size_; ++r)
        for (int c = 0; c < size_; ++c) out.set(r, c, roll_mask.generate(row0_ + r, c));
    }
    return out;
  }

  /// Clears roll-mask pixels the model cannot reach.
  Mask restrict(const Mask& roll_mask) const {
    if (folded_) return roll_mask;
    Mask out = roll_mask;
    for (int r = 0; r < out.height(); ++r)
      for (int c = 0; c < out.width(); ++c)
        if (r < row0_ || r >= row0_ + size_ || c >= size_) out.set(r, c, false);
    return out;
  }

 private:
  RollDomain(int size, int row0, bool folded) : size_(size), row0_(row0), folded_(folded) {}

  void check_window(const RgbImage& window) const {
    if (window.width() != roll_width() || window.height() != kRollHeight)
      throw DataError("roll window is " + std::to_string(window.width()) + "x" + std::to_string(window.height()) +
                      ", domain expects " + std::to_string(roll_width()) + "x128");
  }

  int size_;
  int row0_;
  bool folded_;
};

}  // namespace pom
