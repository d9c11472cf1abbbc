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
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pom/codec/chords.hpp"
#include "pom/codec/midi.hpp"
#include "pom/codec/pianoroll.hpp"
#include "pom/util/files.hpp"
#include "pom/util/log.hpp"
#include "pom/util/png.hpp"

namespace pom::data {

namespace fs = std::filesystem;

/// Full-song raster, N_t columns wide.
struct SongRaster {
  std::string id;
  RgbImage image;
  int n_ticks = 0;
  fs::path source;
};

inline int song_length(const std::vector<NoteEvent>& notes) {
  int n = 1;
  for (const auto& note : notes) n = std::max(n, note.end());
  return n;
}

/// Every shift in [min_offset, max_offset] whose notes all stay inside [8,119].
inline std::map<int, std::vector<NoteEvent>> transpose_augment(const std::vector<NoteEvent>& notes,
                                                               int min_offset = -12, int max_offset = 12) {
  if (min_offset < -12 || max_offset > 12 || min_offset > max_offset)
    throw UsageError("transposition range must lie within [-12, 12]");
  int lo = 127, hi = 0;
  for (const auto& n : notes) {
    lo = std::min(lo, n.pitch);
    hi = std::max(hi, n.pitch);
  }
  std::map<int, std::vector<NoteEvent>> out;
  for (int offset = min_offset; offset <= max_offset; ++offset) {
    if (!notes.empty() && (lo + offset < kMinPitch || hi + offset > kMaxPitch)) {
      log::warn("dropping transposition " + std::to_string(offset) + ": pitch range [" +
                std::to_string(lo + offset) + "," + std::to_string(hi + offset) + "] leaves [8,119]");
      continue;
    }
    auto shifted = notes;
    for (auto& n : shifted) n.pitch += offset;
    out.emplace(offset, std::move(shifted));
  }
  return out;
}

/// Random fixed-width window; columns past the song end are black.
template <class Rng>
RgbImage window_random(const SongRaster& song, Rng& rng, int width = kWindowWidth) {
  const int span = std::max(1, song.n_ticks - width);
  std::uniform_int_distribution<int> start(0, span - 1);
  return crop_columns(song.image, start(rng), width);
}

/// Beat-level triad labelling: a binary chroma per beat (so octave doublings do
/// not change it) matched against 24 major/minor templates by cosine similarity.
inline ChordTrack chord_detect(const std::vector<NoteEvent>& notes, int beat_ticks = 4) {
  const int length = notes.empty() ? 0 : song_length(notes);
  const int beats = (length + beat_ticks - 1) / beat_ticks;
  std::vector<std::array<bool, 12>> chroma(beats, std::array<bool, 12>{});
  for (const auto& n : notes)
    for (int b = n.onset / beat_ticks; b * beat_ticks < n.end() && b < beats; ++b) chroma[b][n.pitch % 12] = true;

  ChordTrack track;
  for (int b = 0; b < beats; ++b) {
    int present = 0;
    for (bool v : chroma[b]) present += v;
    int best = chords::kNone;
    if (present > 0) {
      double best_score = -1;
      for (int quality = 0; quality < 2; ++quality)
        for (int root = 0; root < 12; ++root) {
          const int third = quality == 0 ? 4 : 3;
          const int hits = chroma[b][root] + chroma[b][(root + third) % 12] + chroma[b][(root + 7) % 12];
          const double score = hits / std::sqrt(3.0 * present);
          if (score > best_score + 1e-12) {
            best_score = score;
            best = quality == 0 ? chords::major(root) : chords::minor(root);
          }
        }
    }
    if (best == chords::kNone) continue;
    const int start = b * beat_ticks, end = (b + 1) * beat_ticks;
    if (!track.spans.empty() && track.spans.back().end == start && track.spans.back().label.index == best)
      track.spans.back().end = end;
    else
      track.spans.push_back({start, end, chords::label(best)});
  }
  // Keep spans inside the song so the borders never extend past the last note.
  if (!track.spans.empty()) track.spans.back().end = std::min(track.spans.back().end, length);
  if (!track.spans.empty() && track.spans.back().end <= track.spans.back().start) track.spans.pop_back();
  return track;
}

inline SongRaster render_song(std::string id, const std::vector<NoteEvent>& notes, fs::path source = {}) {
  const int n_ticks = song_length(notes);
  return {std::move(id), render_roll(notes, chord_detect(notes), n_ticks), n_ticks, std::move(source)};
}

struct ManifestEntry {
  std::string song;
  int transposition = 0;
  std::string path;
  int n_ticks = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::pair<std::string, std::string>> errors;  // (file, message)
  int songs = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries)
      j["entries"].push_back({{"song", e.song}, {"transposition", e.transposition}, {"path", e.path}, {"n_ticks", e.n_ticks}});
    j["errors"] = nlohmann::json::array();
    for (const auto& [file, msg] : errors) j["errors"].push_back({{"file", file}, {"error", msg}});
    j["counts"] = {{"songs", songs}, {"entries", entries.size()}, {"errors", errors.size()}};
    return j;
  }
};

inline std::string image_name(const std::string& song, int offset) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%+03d", offset);
  return song + "_" + buf + ".png";
}

inline bool is_midi_path(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".mid" || ext == ".midi";
}

/// Renders every (song, transposition) pair of a MIDI directory to PNG and
/// writes manifest.json plus the chord vocabulary sidecar.
inline DatasetManifest build_dataset(const fs::path& midi_dir, const fs::path& out_dir, int min_offset = -12,
                                     int max_offset = 12) {
  if (!fs::is_directory(midi_dir)) throw DataError("not a directory: " + midi_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(midi_dir))
    if (e.is_regular_file() && is_midi_path(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  for (const auto& file : files) {
    const std::string song = file.stem().string();
    try {
      const auto notes = midi::midi_to_notes(read_file(file));
      if (notes.empty()) throw DataError("no notes");
      for (const auto& [offset, variant] : transpose_augment(notes, min_offset, max_offset)) {
        auto raster = render_song(song, variant, file);
        const auto name = image_name(song, offset);
        png::write(out_dir / name, raster.image);
        manifest.entries.push_back({song, offset, name, raster.n_ticks});
      }
      ++manifest.songs;
    } catch (const std::exception& e) {
      log::warn("skipping " + file.string() + ": " + e.what());
      manifest.errors.emplace_back(file.filename().string(), e.what());
    }
  }
  write_file_atomic(out_dir / "manifest.json", manifest.to_json().dump(2));
  write_file_atomic(out_dir / "chords.json", chords::vocabulary_json().dump(2));
  return manifest;
}

}  // namespace pom::data
