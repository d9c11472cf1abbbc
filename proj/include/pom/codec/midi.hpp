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
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pom/codec/notes.hpp"
#include "pom/error.hpp"
#include "pom/util/log.hpp"

namespace pom::midi {

inline constexpr int kOutputPpq = 480;
inline constexpr int kTicksPerSixteenth = kOutputPpq / 4;
inline constexpr std::uint32_t kTempo120 = 500000;  // microseconds per quarter
inline constexpr int kDrumChannel = 9;

namespace detail {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ >= bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("malformed MIDI at byte " + std::to_string(pos_) + ": " + what);
  }

  std::uint8_t u8() {
    if (pos_ >= bytes_.size()) fail("unexpected end of data");
    return bytes_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= bytes_.size()) fail("unexpected end of data");
    return bytes_[pos_];
  }
  std::uint32_t be(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const auto b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    fail("variable-length quantity longer than 4 bytes");
  }
  void skip(std::size_t n) {
    if (n > bytes_.size() - pos_) fail("chunk extends past end of data");
    pos_ += n;
  }
  std::string tag() {
    std::string s;
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>(u8()));
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Nearest 16th for a tick position at the given PPQ; halves round up.
inline int quantize(std::uint64_t tick, int ppq) {
  return static_cast<int>((tick * 8 + static_cast<std::uint64_t>(ppq)) / (2 * static_cast<std::uint64_t>(ppq)));
}

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7F));
  while (n) out.push_back(buf[--n]);
}

inline void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace detail

/// Parses a Standard MIDI File (format 0 or 1). Times are read in beats and
/// quantized to the nearest 16th; the tempo map is ignored. Drum channel is skipped.
inline std::vector<NoteEvent> midi_to_notes(std::span<const std::uint8_t> bytes) {
  detail::Reader in(bytes);
  if (in.tag() != "MThd") in.fail("missing MThd header");
  const auto header_len = in.be(4);
  if (header_len < 6) in.fail("header chunk too short");
  const auto format = in.be(2);
  const auto ntracks = in.be(2);
  const auto division = in.be(2);
  in.skip(header_len - 6);
  if (format > 1) in.fail("unsupported SMF format " + std::to_string(format));
  if (division & 0x8000) in.fail("SMPTE time division is not supported");
  const int ppq = static_cast<int>(division);
  if (ppq == 0) in.fail("zero ticks per quarter note");

  std::vector<NoteEvent> notes;
  for (std::uint32_t t = 0; t < ntracks; ++t) {
    if (in.tag() != "MTrk") in.fail("missing MTrk chunk");
    const auto len = in.be(4);
    const auto end = in.offset() + len;
    if (end > bytes.size()) in.fail("track chunk extends past end of data");

    std::uint64_t tick = 0;
    std::uint8_t status = 0;
    struct Open {
      std::uint64_t tick;
      int velocity;
    };
    std::map<std::pair<int, int>, std::deque<Open>> open;  // (channel, pitch) -> FIFO

    auto close = [&](int channel, int pitch, std::uint64_t off_tick) {
      auto it = open.find({channel, pitch});
      if (it == open.end() || it->second.empty()) return;
      const Open on = it->second.front();
      it->second.pop_front();
      if (channel == kDrumChannel) return;
      const int onset = detail::quantize(on.tick, ppq);
      const int stop = detail::quantize(off_tick, ppq);
      notes.push_back({pitch, onset, std::max(1, stop - onset), std::clamp(on.velocity, 1, 127)});
    };

    bool ended = false;
    while (in.offset() < end && !ended) {
      tick += in.vlq();
      std::uint8_t b = in.peek();
      if (b & 0x80) {
        in.u8();
        if (b < 0xF0) status = b;
      } else {
        if (status == 0) in.fail("data byte without running status");
        b = status;
      }

      if (b == 0xFF) {
        const auto type = in.u8();
        const auto n = in.vlq();
        in.skip(n);
        if (type == 0x2F) ended = true;
        continue;
      }
      if (b == 0xF0 || b == 0xF7) {
        in.skip(in.vlq());
        continue;
      }
      if (b >= 0xF0) in.fail("unexpected system message");

      const int kind = b & 0xF0;
      const int channel = b & 0x0F;
      const int d1 = in.u8();
      if (d1 & 0x80) in.fail("data byte out of range");
      int d2 = 0;
      if (kind != 0xC0 && kind != 0xD0) {
        d2 = in.u8();
        if (d2 & 0x80) in.fail("data byte out of range");
      }
      if (kind == 0x90 && d2 > 0) {
        open[{channel, d1}].push_back({tick, d2});
      } else if (kind == 0x80 || (kind == 0x90 && d2 == 0)) {
        close(channel, d1, tick);
      }
    }
    if (in.offset() > end) in.fail("event crosses track chunk boundary");
    for (auto& [key, fifo] : open) {
      while (!fifo.empty()) {
        if (key.first != kDrumChannel)
          log::warn("note-on without note-off (pitch " + std::to_string(key.second) +
                    "), closed at end of track");
        close(key.first, key.second, tick);
      }
    }
    in.skip(end - in.offset());
  }
  std::sort(notes.begin(), notes.end(), note_order);
  return notes;
}

/// Writes a format-0 file at PPQ 480 and 120 BPM on channel 0.
inline std::vector<std::uint8_t> notes_to_midi(const std::vector<NoteEvent>& notes) {
  struct Event {
    std::uint64_t tick;
    int order;  // offs before ons at equal ticks
    std::uint8_t status, d1, d2;
  };
  std::vector<Event> events;
  events.reserve(notes.size() * 2);
  for (const auto& n : notes) {
    if (!n.valid()) throw DataError("cannot write invalid note at onset " + std::to_string(n.onset));
    const auto on = static_cast<std::uint64_t>(n.onset) * kTicksPerSixteenth;
    const auto off = static_cast<std::uint64_t>(n.end()) * kTicksPerSixteenth;
    events.push_back({on, 1, 0x90, static_cast<std::uint8_t>(n.pitch), static_cast<std::uint8_t>(n.velocity)});
    events.push_back({off, 0, 0x80, static_cast<std::uint8_t>(n.pitch), 0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.order < b.order;
  });

  std::vector<std::uint8_t> track;
  detail::put_vlq(track, 0);
  track.insert(track.end(), {0xFF, 0x51, 0x03});
  detail::put_be(track, kTempo120, 3);
  std::uint64_t last = 0;
  for (const auto& e : events) {
    detail::put_vlq(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    track.insert(track.end(), {e.status, e.d1, e.d2});
  }
  detail::put_vlq(track, 0);
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd'};
  detail::put_be(out, 6, 4);
  detail::put_be(out, 0, 2);
  detail::put_be(out, 1, 2);
  detail::put_be(out, kOutputPpq, 2);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  detail::put_be(out, static_cast<std::uint32_t>(track.size()), 4);
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

}  // namespace pom::midi
