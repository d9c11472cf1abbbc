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
#include <random>
#include <string>
#include <vector>

#include "pom/data/dataset.hpp"

namespace pom::data {

/// Pitch band the synthetic songs live in.
struct MotifBand {
  int low = 40;
  int high = 88;
};

/// A synthetic song: a chord progression voiced as a mix of 16th-note
/// arpeggios, block chords and scale runs, one bar (16 ticks) at a time.
template <class Rng>
std::vector<NoteEvent> synthetic_song(Rng& rng, int bars, MotifBand band = {}) {
  static constexpr std::array<int, 7> kMajorScale = {0, 2, 4, 5, 7, 9, 11};
  std::uniform_int_distribution<int> key_dist(0, 11), style_dist(0, 2), degree_dist(0, 6), vel_dist(70, 120);
  const int key = key_dist(rng);
  auto fit = [&](int pitch) {
    while (pitch < band.low) pitch += 12;
    while (pitch > band.high) pitch -= 12;
    return pitch;
  };
  std::vector<NoteEvent> notes;
  const int base = band.low + 12;
  for (int bar = 0; bar < bars; ++bar) {
    const int t0 = bar * 16;
    const int degree = degree_dist(rng);
    std::array<int, 3> chord{};
    for (int k = 0; k < 3; ++k) {
      const int step = degree + 2 * k;
      chord[static_cast<std::size_t>(k)] = base + key + kMajorScale[static_cast<std::size_t>(step % 7)] + 12 * (step / 7);
    }
    const int vel = vel_dist(rng);
    switch (style_dist(rng)) {
      case 0:  // up-and-down arpeggio over two octaves
        for (int t = 0; t < 16; ++t) {
          const int idx = t < 8 ? t : 15 - t;
          const int pitch = fit(chord[static_cast<std::size_t>(idx % 3)] + 12 * (idx / 3));
          notes.push_back({pitch, t0 + t, 1, vel});
        }
        break;
      case 1:  // two held block chords with an octave bass
        for (int half = 0; half < 2; ++half) {
          for (int p : chord) notes.push_back({fit(p + 12), t0 + 8 * half, 8, vel});
          notes.push_back({fit(chord[0] - 12), t0 + 8 * half, 8, vel});
        }
        break;
      default: {  // scale run from the chord root, in eighths
        const int dir = (bar % 2 == 0) ? 1 : -1;
        for (int t = 0; t < 8; ++t) {
          const int step = degree + dir * t + 14;
          const int pitch = fit(base + 12 + key + kMajorScale[static_cast<std::size_t>(step % 7)] + 12 * (step / 7 - 2));
          notes.push_back({pitch, t0 + 2 * t, 2, vel});
        }
        break;
      }
    }
  }
  // Same-pitch collisions between motifs: keep the earliest note only.
  std::sort(notes.begin(), notes.end(), note_order);
  std::vector<NoteEvent> out;
  std::array<int, 128> busy_until{};
  for (const auto& n : notes) {
    if (n.onset < busy_until[static_cast<std::size_t>(n.pitch)]) continue;
    busy_until[static_cast<std::size_t>(n.pitch)] = n.end();
    out.push_back(n);
  }
  return out;
}

/// Deterministic corpus of rendered synthetic songs.
inline std::vector<SongRaster> synthetic_corpus(int songs, std::uint64_t seed, int bars = 24, MotifBand band = {}) {
  std::mt19937_64 rng(seed);
  std::vector<SongRaster> out;
  out.reserve(static_cast<std::size_t>(songs));
  for (int i = 0; i < songs; ++i) out.push_back(render_song("motif" + std::to_string(i), synthetic_song(rng, bars, band)));
  return out;
}

}  // namespace pom::data
