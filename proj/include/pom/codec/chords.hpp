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

#include <array>
#include <string>

#include <json.hpp>

#include "pom/codec/notes.hpp"

namespace pom::chords {

// Vocabulary: 0 = no chord, 1..12 major triads on C..B, 13..24 minor triads on C..B.
inline constexpr int kNone = 0;
inline constexpr int kVocabularySize = 25;

inline constexpr std::array<const char*, 12> kPitchNames = {"C",  "C#", "D",  "D#", "E",  "F",
                                                            "F#", "G",  "G#", "A",  "A#", "B"};

inline int major(int root) { return 1 + (root % 12); }
inline int minor(int root) { return 13 + (root % 12); }

inline std::string name(int index) {
  if (index == kNone) return "N";
  if (index >= 1 && index <= 12) return kPitchNames[index - 1];
  if (index >= 13 && index <= 24) return std::string(kPitchNames[index - 13]) + "m";
  return "#" + std::to_string(index);
}

inline ChordLabel label(int index) { return {index, name(index)}; }

/// Sidecar mapping index -> name.
inline nlohmann::json vocabulary_json() {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < kVocabularySize; ++i) j[std::to_string(i)] = name(i);
  return j;
}

}  // namespace pom::chords
