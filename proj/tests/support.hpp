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
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pom/codec/notes.hpp"
#include "pom/codec/pianoroll.hpp"
#include "pom/image.hpp"

namespace pom::testing {

/// Random note list with no two same-pitch notes overlapping. Abutting
/// same-pitch notes are allowed; onset markers keep them apart.
template <class Rng>
std::vector<NoteEvent> random_notes(Rng& rng, int count, int width) {
  std::uniform_int_distribution<int> pitch(kMinPitch, kMaxPitch), vel(1, 127), onset(0, width - 1);
  std::vector<std::vector<bool>> used(128, std::vector<bool>(static_cast<std::size_t>(width), false));
  std::vector<NoteEvent> notes;
  for (int tries = 0; static_cast<int>(notes.size()) < count && tries < count * 20; ++tries) {
    NoteEvent n;
    n.pitch = pitch(rng);
    n.onset = onset(rng);
    n.duration = std::uniform_int_distribution<int>(1, std::min(32, width - n.onset))(rng);
    n.velocity = vel(rng);
    auto& row = used[static_cast<std::size_t>(n.pitch)];
    bool clash = false;
    for (int t = n.onset; t < n.end(); ++t) clash = clash || row[static_cast<std::size_t>(t)];
    if (clash) continue;
    for (int t = n.onset; t < n.end(); ++t) row[static_cast<std::size_t>(t)] = true;
    notes.push_back(n);
  }
  std::sort(notes.begin(), notes.end(), note_order);
  return notes;
}

/// Random chord track with gaps; adjacent spans never share a label.
template <class Rng>
ChordTrack random_chords(Rng& rng, int width) {
  ChordTrack track;
  std::uniform_int_distribution<int> len(1, 24), index(1, kChordCapacity - 1), gap(0, 3);
  int t = gap(rng);
  int last = -1;
  while (t < width) {
    const int end = std::min(width, t + len(rng));
    int idx = index(rng);
    if (idx == last) idx = idx % (kChordCapacity - 1) + 1;
    track.spans.push_back({t, end, {idx, std::nullopt}});
    last = idx;
    const int g = gap(rng);
    if (g > 0) last = -1;
    t = end + g;
  }
  return track;
}

template <class Rng>
RgbImage random_image(Rng& rng, int width, int height) {
  std::uniform_int_distribution<int> byte(0, 255);
  RgbImage img(width, height);
  for (auto& px : img.pixels())
    px = {static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng))};
  return img;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pom-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pom::testing
