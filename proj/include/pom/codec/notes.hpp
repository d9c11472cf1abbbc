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

#include <compare>
#include <optional>
#include <string>
#include <vector>

namespace pom {

/// A quantized note. Times are in 16th-note ticks.
struct NoteEvent {
  int pitch = 60;
  int onset = 0;
  int duration = 1;
  int velocity = 100;

  int end() const { return onset + duration; }
  bool valid() const {
    return pitch >= 0 && pitch <= 127 && onset >= 0 && duration >= 1 && velocity >= 1 && velocity <= 127;
  }
  friend auto operator<=>(const NoteEvent&, const NoteEvent&) = default;
};

/// Canonical order: onset, then pitch.
inline bool note_order(const NoteEvent& a, const NoteEvent& b) {
  if (a.onset != b.onset) return a.onset < b.onset;
  if (a.pitch != b.pitch) return a.pitch < b.pitch;
  if (a.duration != b.duration) return a.duration < b.duration;
  return a.velocity < b.velocity;
}

inline constexpr int kChordCapacity = 729;  // 9^3

struct ChordLabel {
  int index = 0;  // 0 means "no chord"
  std::optional<std::string> name;
  friend bool operator==(const ChordLabel& a, const ChordLabel& b) { return a.index == b.index; }
};

struct ChordSpan {
  int start = 0;
  int end = 0;  // exclusive
  ChordLabel label;
  friend bool operator==(const ChordSpan&, const ChordSpan&) = default;
};

/// Sorted, non-overlapping chord spans. Ticks not covered have no chord.
struct ChordTrack {
  std::vector<ChordSpan> spans;

  int index_at(int tick) const {
    for (const auto& s : spans)
      if (tick >= s.start && tick < s.end) return s.label.index;
    return 0;
  }
  bool valid() const {
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].end <= spans[i].start) return false;
      if (spans[i].label.index < 0 || spans[i].label.index >= kChordCapacity) return false;
      if (i > 0 && spans[i].start < spans[i - 1].end) return false;
    }
    return true;
  }
  friend bool operator==(const ChordTrack&, const ChordTrack&) = default;
};

}  // namespace pom
