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
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pom/codec/notes.hpp"
#include "pom/error.hpp"
#include "pom/image.hpp"
#include "pom/util/log.hpp"

namespace pom {

inline constexpr int kRollHeight = 128;
inline constexpr int kBorderRows = 8;
inline constexpr int kMinPitch = kBorderRows;                    // 8
inline constexpr int kMaxPitch = kRollHeight - kBorderRows - 1;  // 119
inline constexpr int kWindowWidth = 512;
inline constexpr int kFoldedSize = 256;
inline constexpr int kChordStep = 30;

inline constexpr int pitch_to_row(int pitch) { return kRollHeight - 1 - pitch; }
inline constexpr int row_to_pitch(int row) { return kRollHeight - 1 - row; }
inline constexpr bool is_border_row(int row) { return row < kBorderRows || row >= kRollHeight - kBorderRows; }

/// Affine velocity -> brightness map onto [128, 255]: every valid note stays
/// above the decode threshold, and velocity 127 is full scale.
inline constexpr int kNoteThreshold = 128;

inline std::uint8_t velocity_to_level(int velocity) {
  return static_cast<std::uint8_t>(kNoteThreshold + std::lround((velocity - 1) * 127.0 / 126.0));
}

inline int level_to_velocity(double level) {
  return std::clamp(1 + static_cast<int>(std::lround((level - kNoteThreshold) * 126.0 / 127.0)), 1, 127);
}

// --- chord colors ----------------------------------------------------------

/// Base-9 digits of the index, one per channel, spaced 30 levels apart.
inline Rgb encode_chord_color(int index) {
  if (index < 0 || index >= kChordCapacity)
    throw std::invalid_argument("chord index out of range: " + std::to_string(index));
  const int d2 = index / 81, d1 = (index / 9) % 9, d0 = index % 9;
  return {static_cast<std::uint8_t>(kChordStep * d2), static_cast<std::uint8_t>(kChordStep * d1),
          static_cast<std::uint8_t>(kChordStep * d0)};
}

inline int snap_chord_digit(double channel) {
  return std::clamp(static_cast<int>(std::lround(channel / kChordStep)), 0, 8);
}

inline int decode_chord_color(double r, double g, double b) {
  return 81 * snap_chord_digit(r) + 9 * snap_chord_digit(g) + snap_chord_digit(b);
}

inline int decode_chord_color(Rgb c) { return decode_chord_color(c.r, c.g, c.b); }

// --- roll rendering ---------------------------------------------------------

inline void check_roll(const RgbImage& img) {
  if (img.height() != kRollHeight)
    throw DataError("piano roll must be 128 rows tall, got " + std::to_string(img.height()));
}

/// Rasterizes notes and chord borders. Body pixels carry G, the onset column
/// also carries R, and border rows carry the chord color of their column.
inline RgbImage render_roll(std::vector<NoteEvent> notes, const ChordTrack& chords, int width) {
  if (width < 1) throw DataError("roll width must be positive");
  for (const auto& n : notes) {
    if (!n.valid()) throw DataError("invalid note at onset " + std::to_string(n.onset));
    if (n.pitch < kMinPitch || n.pitch > kMaxPitch)
      throw DataError("note pitch " + std::to_string(n.pitch) + " outside [8,119] at onset " +
                      std::to_string(n.onset));
    if (n.end() > width)
      throw DataError("note at onset " + std::to_string(n.onset) + " extends past roll width " +
                      std::to_string(width));
  }
  if (!chords.valid()) throw DataError("chord track spans are unsorted or overlapping");

  RgbImage img(width, kRollHeight);
  std::sort(notes.begin(), notes.end(), note_order);

  std::array<int, 128> busy_until{};
  for (const auto& n : notes) {
    if (busy_until[n.pitch] > n.onset)
      log::warn("overlapping notes at pitch " + std::to_string(n.pitch) + ", tick " +
                std::to_string(n.onset) + ": earlier note is split");
    busy_until[n.pitch] = std::max(busy_until[n.pitch], n.end());

    const int row = pitch_to_row(n.pitch);
    const auto level = velocity_to_level(n.velocity);
    for (int c = n.onset; c < n.end(); ++c) {
      auto& px = img.at(row, c);
      px.g = level;
      px.r = 0;
    }
    img.at(row, n.onset).r = level;
  }

  for (const auto& span : chords.spans) {
    const Rgb color = encode_chord_color(span.label.index);
    for (int c = std::max(0, span.start); c < std::min(width, span.end); ++c)
      for (int r = 0; r < kBorderRows; ++r) {
        img.at(r, c) = color;
        img.at(kRollHeight - 1 - r, c) = color;
      }
  }
  return img;
}

struct DecodedRoll {
  std::vector<NoteEvent> notes;
  ChordTrack chords;
};

/// Inverse of render_roll. Pixels below threshold are ignored, so noisy
/// generator output decodes to the notes it visibly contains.
inline DecodedRoll decode_roll(const RgbImage& img) {
  check_roll(img);
  DecodedRoll out;
  const int width = img.width();

  for (int row = kBorderRows; row < kRollHeight - kBorderRows; ++row) {
    int start = -1;
    long level_sum = 0;
    auto close = [&](int end) {
      if (start < 0) return;
      const double mean = static_cast<double>(level_sum) / (end - start);
      out.notes.push_back({row_to_pitch(row), start, end - start, level_to_velocity(mean)});
      start = -1;
      level_sum = 0;
    };
    for (int c = 0; c < width; ++c) {
      const auto& px = img.at(row, c);
      if (px.g < kNoteThreshold) {
        close(c);
        continue;
      }
      if (start >= 0 && px.r >= kNoteThreshold) close(c);
      if (start < 0) start = c;
      level_sum += px.g;
    }
    close(width);
  }
  std::sort(out.notes.begin(), out.notes.end(), note_order);

  int current = 0, span_start = 0;
  for (int c = 0; c <= width; ++c) {
    int index = 0;
    if (c < width) {
      double r = 0, g = 0, b = 0;
      for (int row = 0; row < kBorderRows; ++row) {
        const auto& px = img.at(row, c);
        r += px.r;
        g += px.g;
        b += px.b;
      }
      index = decode_chord_color(r / kBorderRows, g / kBorderRows, b / kBorderRows);
    }
    if (index != current) {
      if (current != 0) out.chords.spans.push_back({span_start, c, {current, std::nullopt}});
      current = index;
      span_start = c;
    }
  }
  return out;
}

// --- fold / unfold ----------------------------------------------------------

/// Places the horizontally reversed right half of a 512x128 roll beneath the left half.
inline RgbImage fold(const RgbImage& roll) {
  if (roll.width() != kWindowWidth || roll.height() != kRollHeight)
    throw DataError("fold expects 512x128, got " + std::to_string(roll.width()) + "x" +
                    std::to_string(roll.height()));
  RgbImage out(kFoldedSize, kFoldedSize);
  for (int r = 0; r < kRollHeight; ++r)
    for (int c = 0; c < kFoldedSize; ++c) {
      out.at(r, c) = roll.at(r, c);
      out.at(r + kRollHeight, c) = roll.at(r, kWindowWidth - 1 - c);
    }
  return out;
}

inline RgbImage unfold(const RgbImage& folded) {
  if (folded.width() != kFoldedSize || folded.height() != kFoldedSize)
    throw DataError("unfold expects 256x256, got " + std::to_string(folded.width()) + "x" +
                    std::to_string(folded.height()));
  RgbImage out(kWindowWidth, kRollHeight);
  for (int r = 0; r < kRollHeight; ++r)
    for (int c = 0; c < kFoldedSize; ++c) {
      out.at(r, c) = folded.at(r, c);
      out.at(r, kWindowWidth - 1 - c) = folded.at(r + kRollHeight, c);
    }
  return out;
}

/// Columns [start, start+width) of a roll, zero padded past the end.
inline RgbImage crop_columns(const RgbImage& roll, int start, int width) {
  RgbImage out(width, roll.height());
  for (int r = 0; r < roll.height(); ++r)
    for (int c = 0; c < width; ++c) {
      const int src = start + c;
      if (src >= 0 && src < roll.width()) out.at(r, c) = roll.at(r, src);
    }
  return out;
}

}  // namespace pom
