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

#include <map>
#include <string>

#include <json.hpp>

#include "pom/inpaint/job.hpp"
#include "pom/util/base64.hpp"
#include "pom/util/png.hpp"

namespace pom {

using FieldErrors = std::map<std::string, std::string>;

/// {"preset": name[, "rect": {...}]} | {"polygons": [[[tick, pitch], ...], ...]} | {"png_base64": "..."}
inline nlohmann::json mask_spec_to_json(const MaskSpec& spec) {
  nlohmann::json j;
  if (const auto* gray = std::get_if<GrayImage>(&spec.source)) {
    j["png_base64"] = base64_encode(png::encode(*gray));
  } else if (const auto* polys = std::get_if<std::vector<Polygon>>(&spec.source)) {
    j["polygons"] = nlohmann::json::array();
    for (const auto& p : *polys) {
      auto verts = nlohmann::json::array();
      for (const auto& [t, pitch] : p.vertices) verts.push_back({t, pitch});
      j["polygons"].push_back(std::move(verts));
    }
  } else {
    const auto& preset = std::get<PresetMask>(spec.source);
    j["preset"] = preset_name(preset.kind);
    if (preset.kind == Preset::custom_rect)
      j["rect"] = {{"tick_begin", preset.rect.tick_begin},
                   {"tick_end", preset.rect.tick_end},
                   {"pitch_low", preset.rect.pitch_low},
                   {"pitch_high", preset.rect.pitch_high}};
  }
  return j;
}

/// Throws DataError with a message suitable for the "mask" field.
inline MaskSpec mask_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("must be an object");
  const int kinds = int(j.contains("png_base64")) + int(j.contains("polygons")) + int(j.contains("preset"));
  if (kinds != 1) throw DataError("exactly one of png_base64, polygons, preset is required");
  MaskSpec spec;
  try {
    if (j.contains("png_base64")) {
      if (!j["png_base64"].is_string()) throw DataError("png_base64 must be a string");
      spec.source = png::decode_gray(base64_decode(j["png_base64"].get<std::string>()));
    } else if (j.contains("polygons")) {
      std::vector<Polygon> polys;
      for (const auto& pj : j.at("polygons")) {
        Polygon p;
        for (const auto& v : pj) {
          if (!v.is_array() || v.size() != 2) throw DataError("polygon vertices must be [tick, pitch] pairs");
          p.vertices.emplace_back(v[0].get<double>(), v[1].get<double>());
        }
        if (p.vertices.size() < 3) throw DataError("polygon needs at least 3 vertices");
        if (std::abs(p.signed_area()) < 1e-12) throw DataError("degenerate polygon (zero area)");
        polys.push_back(std::move(p));
      }
      if (polys.empty()) throw DataError("polygons must not be empty");
      spec.source = std::move(polys);
    } else {
      const auto kind = parse_preset(j["preset"].get<std::string>());
      if (!kind) throw DataError("unknown preset '" + j["preset"].get<std::string>() + "'");
      PresetMask preset{*kind, {}};
      if (*kind == Preset::custom_rect) {
        if (!j.contains("rect")) throw DataError("custom-rect needs rect");
        const auto& r = j["rect"];
        preset.rect = {r.at("tick_begin").get<int>(), r.at("tick_end").get<int>(), r.at("pitch_low").get<int>(),
                       r.at("pitch_high").get<int>()};
        if (preset.rect.tick_end <= preset.rect.tick_begin || preset.rect.pitch_high < preset.rect.pitch_low)
          throw DataError("degenerate rectangle");
      }
      spec.source = preset;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed mask: ") + e.what());
  }
  return spec;
}

inline nlohmann::json job_to_json(const GenerationJob& job) {
  return {{"roll_id", job.roll_id}, {"mask", mask_spec_to_json(job.mask)}, {"steps", job.steps},
          {"repaints", job.repaints}, {"n_samples", job.n_samples}, {"top_k", job.top_k},
          {"eta", job.eta},         {"seed", job.seed}};
}

/// Parses a job body. Field-level problems go to `errors`; the returned job is
/// only meaningful when `errors` is empty.
inline GenerationJob job_from_json(const nlohmann::json& j, FieldErrors& errors) {
  GenerationJob job;
  if (!j.is_object()) {
    errors["body"] = "must be a JSON object";
    return job;
  }
  auto read_int = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) {
      errors[key] = "must be an integer";
      return;
    }
    const auto v = j[key].get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      errors[key] = "out of range";
      return;
    }
    out = static_cast<int>(v);
  };
  if (!j.contains("roll_id") || !j["roll_id"].is_string())
    errors["roll_id"] = "required string";
  else
    job.roll_id = j["roll_id"].get<std::string>();
  if (!j.contains("mask")) {
    errors["mask"] = "required";
  } else {
    try {
      job.mask = mask_spec_from_json(j["mask"]);
    } catch (const std::exception& e) {
      errors["mask"] = e.what();
    }
  }
  read_int("steps", job.steps);
  read_int("repaints", job.repaints);
  read_int("n_samples", job.n_samples);
  read_int("top_k", job.top_k);
  if (j.contains("eta")) {
    if (j["eta"].is_number())
      job.eta = j["eta"].get<double>();
    else
      errors["eta"] = "must be a number";
  }
  if (j.contains("seed")) {
    if (j["seed"].is_number_unsigned() || (j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0))
      job.seed = j["seed"].get<std::uint64_t>();
    else
      errors["seed"] = "must be a non-negative integer";
  }
  for (const auto& [field, msg] : job.validate())
    if (!errors.count(field)) errors[field] = msg;
  return job;
}

}  // namespace pom
