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
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pom/error.hpp"
#include "pom/models/hourglass.hpp"
#include "pom/util/files.hpp"

namespace pom {

// .pomck layout:
//   8 bytes   magic "POMCKPT1"
//   8 bytes   header length N, little-endian uint64
//   N bytes   UTF-8 JSON header (config, step, tensor table)
//   payload   raw little-endian float32 tensors at the header's offsets
inline constexpr char kCheckpointMagic[8] = {'P', 'O', 'M', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  HourglassConfig config;
  std::int64_t step = 0;
  std::vector<CheckpointTensor> tensors;
};

namespace detail {

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void put_f32_le(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline float get_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline Checkpoint snapshot(const HourglassNet& net, std::int64_t step) {
  Checkpoint ck{net.config(), step, {}};
  for (const auto& p : net.parameters()) {
    const auto& m = p.var->value;
    ck.tensors.push_back({p.name, {m.rows(), m.cols()}, std::vector<float>(m.data(), m.data() + m.size())});
  }
  return ck;
}

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["format"] = "pomck";
  header["version"] = kCheckpointVersion;
  header["config"] = ck.config.to_json();
  header["step"] = ck.step;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    const std::uint64_t nbytes = t.data.size() * 4;
    header["tensors"].push_back(
        {{"name", t.name}, {"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["payload_bytes"] = offset;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : ck.tensors)
    for (float f : t.data) detail::put_f32_le(out, f);
  return out;
}

inline Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint: bad magic (not a .pomck file)");
  const std::uint64_t header_len = detail::get_u64_le(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  try {
    if (header.value("format", "") != "pomck") throw DataError("checkpoint: unknown format");
    if (header.at("version").get<int>() != kCheckpointVersion)
      throw DataError("checkpoint: unsupported version " + header.at("version").dump());
    const std::uint64_t payload_bytes = header.at("payload_bytes");
    const std::span<const std::uint8_t> payload = bytes.subspan(16 + header_len);
    if (payload.size() != payload_bytes)
      throw DataError("checkpoint: payload is " + std::to_string(payload.size()) + " bytes, header declares " +
                      std::to_string(payload_bytes) + " (truncated or padded file)");

    Checkpoint ck;
    ck.config = HourglassConfig::from_json(header.at("config"));
    ck.step = header.at("step");
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& t : header.at("tensors")) {
      if (t.at("dtype") != "f32") throw DataError("checkpoint: unsupported dtype " + t.at("dtype").dump());
      CheckpointTensor tensor{t.at("name"), t.at("shape").get<std::vector<std::int64_t>>(), {}};
      std::uint64_t count = 1;
      for (auto d : tensor.shape) {
        if (d < 0) throw DataError("checkpoint: negative dimension in " + tensor.name);
        count *= static_cast<std::uint64_t>(d);
      }
      const std::uint64_t offset = t.at("offset"), nbytes = t.at("nbytes");
      if (nbytes != count * 4) throw DataError("checkpoint: size of " + tensor.name + " disagrees with its shape");
      if (offset > payload_bytes || nbytes > payload_bytes - offset)
        throw DataError("checkpoint: tensor " + tensor.name + " lies outside the payload");
      ranges.emplace_back(offset, offset + nbytes);
      tensor.data.resize(count);
      for (std::uint64_t i = 0; i < count; ++i) tensor.data[i] = detail::get_f32_le(payload.data() + offset + 4 * i);
      ck.tensors.push_back(std::move(tensor));
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i)
      if (ranges[i].first < ranges[i - 1].second) throw DataError("checkpoint: overlapping tensor ranges");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
}

inline void save_checkpoint(const HourglassNet& net, std::int64_t step, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(snapshot(net, step)));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

/// Human-readable list of differing config fields.
inline std::string config_diff(const HourglassConfig& expected, const HourglassConfig& found) {
  const auto a = expected.to_json(), b = found.to_json();
  std::string out;
  for (auto it = a.begin(); it != a.end(); ++it)
    if (b.value(it.key(), nlohmann::json()) != it.value())
      out += (out.empty() ? "" : ", ") + it.key() + ": expected " + it.value().dump() + ", found " + b[it.key()].dump();
  return out;
}

/// Copies tensors into an existing model. All checks run before any write,
/// so a rejected checkpoint leaves the model untouched.
inline void load_into(HourglassNet& net, const Checkpoint& ck) {
  if (!(ck.config == net.config())) throw DataError("checkpoint config mismatch: " + config_diff(net.config(), ck.config));
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ck.tensors) by_name[t.name] = &t;
  for (const auto& p : net.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint missing tensor " + p.name);
    const auto& m = p.var->value;
    if (it->second->shape != std::vector<std::int64_t>{m.rows(), m.cols()})
      throw DataError("checkpoint tensor " + p.name + " has wrong shape");
  }
  if (by_name.size() != net.parameters().size()) throw DataError("checkpoint has unexpected extra tensors");
  for (auto& p : net.parameters()) {
    const auto& src = by_name.at(p.name)->data;
    std::copy(src.begin(), src.end(), p.var->value.data());
  }
}

inline std::shared_ptr<HourglassNet> load_model(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  auto net = std::make_shared<HourglassNet>(ck.config);
  load_into(*net, ck);
  return net;
}

}  // namespace pom
