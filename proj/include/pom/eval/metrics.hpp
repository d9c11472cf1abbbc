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
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pom/codec/midi.hpp"
#include "pom/codec/pianoroll.hpp"
#include "pom/data/dataset.hpp"
#include "pom/error.hpp"
#include "pom/util/log.hpp"
#include "pom/util/png.hpp"

namespace pom::eval {

struct NoteStats {
  std::vector<int> pitches;
  std::vector<int> durations;

  void add(const std::vector<NoteEvent>& notes) {
    for (const auto& n : notes) {
      pitches.push_back(n.pitch);
      durations.push_back(n.duration);
    }
  }
};

/// Population standard deviation.
inline double pitch_std(std::span<const int> pitches) {
  if (pitches.empty()) throw DataError("pitch_std: no pitches");
  const double n = static_cast<double>(pitches.size());
  const double mean = std::accumulate(pitches.begin(), pitches.end(), 0.0) / n;
  double ss = 0;
  for (int p : pitches) ss += (p - mean) * (p - mean);
  return std::sqrt(ss / n);
}

/// Linear-interpolated quantile at position q * (n - 1) of the sorted data.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty data");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double iqr(const std::vector<double>& values) { return quantile(values, 0.75) - quantile(values, 0.25); }

inline double duration_iqr(std::span<const int> durations) {
  if (durations.size() < 2) throw DataError("duration_iqr: needs at least 2 durations");
  return iqr(std::vector<double>(durations.begin(), durations.end()));
}

struct Binning {
  int first = 0;  // value of bin 0
  int bins = 128;
};

inline constexpr Binning kPitchBins{0, 128};
inline constexpr Binning kDurationBins{1, 128};  // values above 128 land in the last bin

inline std::vector<double> normalized_histogram(std::span<const int> values, Binning b) {
  std::vector<double> h(static_cast<std::size_t>(b.bins), 0.0);
  for (int v : values) h[static_cast<std::size_t>(std::clamp(v - b.first, 0, b.bins - 1))] += 1.0;
  for (auto& x : h) x /= static_cast<double>(values.size());
  return h;
}

/// Overlapping area of two normalized histograms: sum_i min(p_i, q_i).
inline double hist_overlap(std::span<const int> p, std::span<const int> q, Binning b) {
  if (p.empty() || q.empty()) throw DataError("hist_overlap: empty sample set");
  const auto hp = normalized_histogram(p, b), hq = normalized_histogram(q, b);
  double d = 0;
  for (std::size_t i = 0; i < hp.size(); ++i) d += std::min(hp[i], hq[i]);
  return std::min(d, 1.0);
}

inline double sample_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1));
}

/// Silverman's rule: 0.9 * min(std, IQR / 1.34) * n^(-1/5). Falls back to the
/// std when the IQR is zero (heavily tied data such as note durations).
inline double silverman_bandwidth(const std::vector<double>& v) {
  const double sd = sample_std(v);
  const double spread = iqr(v) / 1.34;
  const double scale = spread > 0 ? std::min(sd, spread) : sd;
  return 0.9 * scale * std::pow(static_cast<double>(v.size()), -0.2);
}

namespace detail {

inline std::vector<double> kde_on_grid(const std::vector<double>& samples, double bw, const std::vector<double>& grid) {
  // Sorted samples let each grid point visit only kernels within 8 bandwidths.
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  const double norm = 1.0 / (static_cast<double>(s.size()) * bw * std::sqrt(2.0 * M_PI));
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    auto lo = std::lower_bound(s.begin(), s.end(), x - 8 * bw);
    auto hi = std::upper_bound(s.begin(), s.end(), x + 8 * bw);
    double acc = 0;
    for (auto it = lo; it != hi; ++it) {
      const double z = (x - *it) / bw;
      acc += std::exp(-0.5 * z * z);
    }
    out[g] = acc * norm;
  }
  return out;
}

inline double trapezoid(const std::vector<double>& y, double dx) {
  double s = 0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) s += 0.5 * (y[i] + y[i + 1]) * dx;
  return s;
}

}  // namespace detail

inline constexpr int kKdeGridPoints = 512;
inline constexpr double kDensityFloor = 1e-10;

/// KL(p || q) between Gaussian KDEs of the two sample sets.
inline double kde_kl(const std::vector<double>& p, const std::vector<double>& q) {
  auto distinct = [](const std::vector<double>& v) { return std::set<double>(v.begin(), v.end()).size(); };
  if (p.size() < 2 || q.size() < 2 || distinct(p) < 2 || distinct(q) < 2)
    throw DataError("kde_kl: each sample set needs at least 2 distinct values");
  const double bp = silverman_bandwidth(p), bq = silverman_bandwidth(q);
  const double pad = 3.0 * std::max(bp, bq);
  const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
  const auto [qmin, qmax] = std::minmax_element(q.begin(), q.end());
  const double lo = std::min(*pmin, *qmin) - pad, hi = std::max(*pmax, *qmax) + pad;
  const double dx = (hi - lo) / (kKdeGridPoints - 1);
  std::vector<double> grid(kKdeGridPoints);
  for (int i = 0; i < kKdeGridPoints; ++i) grid[static_cast<std::size_t>(i)] = lo + i * dx;

  auto density = [&](const std::vector<double>& v, double bw) {
    auto d = detail::kde_on_grid(v, bw, grid);
    for (auto& x : d) x = std::max(x, kDensityFloor);
    const double z = detail::trapezoid(d, dx);
    for (auto& x : d) x /= z;
    return d;
  };
  const auto dp = density(p, bp), dq = density(q, bq);
  std::vector<double> integrand(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) integrand[i] = dp[i] * std::log(dp[i] / dq[i]);
  return std::max(0.0, detail::trapezoid(integrand, dx));
}

inline std::vector<double> as_doubles(std::span<const int> v) { return {v.begin(), v.end()}; }

struct MetricsReport {
  double sigma_p = 0;
  double iqr_d = 0;
  double d_p = 0;
  double d_d = 0;
  double dkl_p = 0;
  double dkl_d = 0;
  std::size_t n_gen = 0;
  std::size_t n_ref = 0;

  nlohmann::json to_json() const {
    return {{"sigma_p", sigma_p}, {"iqr_d", iqr_d}, {"d_p", d_p},     {"d_d", d_d},
            {"dkl_p", dkl_p},     {"dkl_d", dkl_d}, {"n_gen", n_gen}, {"n_ref", n_ref}};
  }
};

/// Diversity of the generated side plus its similarity to the reference side.
inline MetricsReport compare(const NoteStats& gen, const NoteStats& ref) {
  MetricsReport r;
  r.sigma_p = pitch_std(gen.pitches);
  r.iqr_d = duration_iqr(gen.durations);
  r.d_p = hist_overlap(gen.pitches, ref.pitches, kPitchBins);
  r.d_d = hist_overlap(gen.durations, ref.durations, kDurationBins);
  r.dkl_p = kde_kl(as_doubles(gen.pitches), as_doubles(ref.pitches));
  r.dkl_d = kde_kl(as_doubles(gen.durations), as_doubles(ref.durations));
  r.n_gen = gen.pitches.size();
  r.n_ref = ref.pitches.size();
  return r;
}

struct DirectoryStats {
  NoteStats stats;
  std::vector<std::pair<std::string, std::string>> skipped;
  std::size_t files = 0;
};

/// Pools notes from every PNG roll and MIDI file in a directory.
inline DirectoryStats collect_notes(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  DirectoryStats out;
  for (const auto& f : files) {
    const bool is_png = f.extension() == ".png";
    if (!is_png && !data::is_midi_path(f)) continue;
    try {
      if (is_png)
        out.stats.add(decode_roll(png::read_rgb(f)).notes);
      else
        out.stats.add(midi::midi_to_notes(read_file(f)));
      ++out.files;
    } catch (const std::exception& e) {
      log::warn("skipping " + f.string() + ": " + e.what());
      out.skipped.emplace_back(f.filename().string(), e.what());
    }
  }
  if (out.stats.pitches.empty()) throw DataError("no decodable notes in " + dir.string());
  return out;
}

inline MetricsReport evaluate_dirs(const std::filesystem::path& gen_dir, const std::filesystem::path& ref_dir) {
  const auto gen = collect_notes(gen_dir);
  const auto ref = collect_notes(ref_dir);
  return compare(gen.stats, ref.stats);
}

}  // namespace pom::eval
