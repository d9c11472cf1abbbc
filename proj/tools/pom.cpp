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

#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pom/data/dataset.hpp"
#include "pom/eval/metrics.hpp"
#include "pom/inpaint/job_json.hpp"
#include "pom/models/train.hpp"
#include "pom/service/server.hpp"
#include "pom/util/log.hpp"
#include "pom/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int max_parallel() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Loads a roll from a PNG or a MIDI file.
pom::RgbImage load_roll(const fs::path& path) {
  if (pom::data::is_midi_path(path)) {
    const auto notes = pom::midi::midi_to_notes(pom::read_file(path));
    if (notes.empty()) throw pom::DataError(path.string() + ": no notes");
    return pom::data::render_song(path.stem().string(), notes).image;
  }
  auto img = pom::png::read_rgb(path);
  pom::check_roll(img);
  return img;
}

pom::MaskSpec parse_mask_arg(const std::string& arg) {
  if (arg.rfind("preset:", 0) == 0) {
    const auto kind = pom::parse_preset(arg.substr(7));
    if (!kind) throw pom::UsageError("unknown mask preset '" + arg.substr(7) + "'");
    if (*kind == pom::Preset::custom_rect) throw pom::UsageError("custom-rect needs a JSON mask file");
    return {pom::PresetMask{*kind, {}}};
  }
  const fs::path path(arg);
  if (path.extension() == ".json") return pom::mask_spec_from_json(json::parse(pom::read_text(path)));
  return {pom::png::read_gray(path)};
}

std::shared_ptr<const pom::Denoiser> load_denoiser(const std::string& ref) {
  return pom::service::resolve_builtin_or_file(ref);
}

void write_outputs(const fs::path& out, const std::vector<pom::RankedResult>& results, const json& extra) {
  fs::create_directories(out);
  json scores = json::array();
  for (const auto& r : results) {
    const std::string stem = std::to_string(r.rank);
    pom::png::write(out / (stem + ".png"), r.image);
    pom::write_file_atomic(out / (stem + ".mid"), r.midi());
    scores.push_back({{"rank", r.rank}, {"score", r.score}, {"seed_offset", r.seed_offset}, {"notes", r.notes.size()}});
  }
  json doc = extra;
  doc["results"] = scores;
  pom::write_file_atomic(out / "scores.json", doc.dump(2));
}

struct Globals {
  bool json_out = false;
  bool verbose = false;
  bool quiet = false;
};

void emit(const Globals& g, const json& doc, const std::string& human) {
  if (g.json_out)
    std::cout << doc.dump(2) << '\n';
  else
    std::cout << human << '\n';
}

int cmd_prepare(const Globals& g, const fs::path& in, const fs::path& out, int tmin, int tmax) {
  if (tmin > tmax) throw pom::UsageError("--transpose-min must not exceed --transpose-max");
  const auto manifest = pom::data::build_dataset(in, out, tmin, tmax);
  if (manifest.songs == 0) throw pom::DataError("no usable MIDI files in " + in.string());
  emit(g, {{"songs", manifest.songs}, {"images", manifest.entries.size()}, {"errors", manifest.errors.size()}},
       "prepared " + std::to_string(manifest.songs) + " songs -> " + std::to_string(manifest.entries.size()) +
           " PNGs in " + out.string() + " (" + std::to_string(manifest.errors.size()) + " files skipped)");
  return 0;
}

int cmd_train(const Globals& g, const fs::path& data, const fs::path& out, pom::TrainOptions opt, int size,
              fs::path loss_csv) {
  const auto songs = pom::load_songs(data);
  pom::HourglassConfig cfg;
  cfg.image_size = size;
  cfg.init_seed = opt.seed;
  cfg.validate();
  pom::HourglassNet net(cfg);
  if (loss_csv.empty()) loss_csv = fs::path(out).replace_extension(".loss.csv");
  opt.loss_csv = loss_csv;
  opt.checkpoint_path = out;
  const auto trace = pom::train_toy(net, songs, opt, [&](const pom::LossRecord& r) {
    if (r.step % 100 == 0 || r.step == opt.steps)
      pom::log::info("step " + std::to_string(r.step) + " loss " + std::to_string(r.loss));
  });
  emit(g, {{"checkpoint", out.string()}, {"loss_csv", loss_csv.string()}, {"steps", trace.size()},
           {"final_loss", trace.back().loss}},
       "trained " + std::to_string(trace.size()) + " steps, final loss " + std::to_string(trace.back().loss) +
           "; checkpoint " + out.string());
  return 0;
}

int cmd_inpaint(const Globals& g, const fs::path& roll, const std::string& mask, const std::string& ckpt,
                pom::GenerationJob job, const fs::path& out, int parallel) {
  job.roll_id = roll.stem().string();
  job.mask = parse_mask_arg(mask);
  if (const auto errors = job.validate(); !errors.empty())
    throw pom::UsageError("--" + errors.begin()->first + " " + errors.begin()->second);
  const auto reference = load_roll(roll);
  const auto model = load_denoiser(ckpt);
  pom::RunOptions options;
  options.parallelism = std::clamp(parallel, 1, max_parallel());
  const auto outcome = pom::run_job(job, reference, *model, options);
  for (const auto& f : outcome.failures)
    pom::log::warn("sample " + std::to_string(f.seed_offset) + " failed: " + f.error);
  json doc = pom::job_to_json(job);
  doc["checkpoint"] = ckpt;
  json all = json::array();
  for (double s : outcome.scores) all.push_back(std::isnan(s) ? json(nullptr) : json(s));
  doc["scores"] = all;
  write_outputs(out, outcome.results, doc);
  std::string human = "wrote " + std::to_string(outcome.results.size()) + " results to " + out.string();
  for (const auto& r : outcome.results)
    human += "\n  #" + std::to_string(r.rank) + " seed+" + std::to_string(r.seed_offset) + " score " +
             std::to_string(r.score);
  json summary = doc;
  summary.erase("mask");
  summary["results"] = json::array();
  for (const auto& r : outcome.results) summary["results"].push_back({{"rank", r.rank}, {"score", r.score}, {"seed_offset", r.seed_offset}});
  emit(g, summary, human);
  return 0;
}

int cmd_sample(const Globals& g, const std::string& ckpt, int n, int steps, double eta, std::uint64_t seed,
               const fs::path& out, int parallel) {
  if (n < 1) throw pom::UsageError("--n must be >= 1");
  const auto model = load_denoiser(ckpt);
  const auto domain = pom::domain_for(*model);
  // Unconditional generation is inpainting of an empty window with everything
  // the model reaches marked generate.
  const pom::RgbImage blank(domain.roll_width(), pom::kRollHeight);
  pom::Mask all(domain.size(), domain.size());
  for (int r = 0; r < all.height(); ++r)
    for (int c = 0; c < all.width(); ++c) all.set(r, c, true);
  const auto schedule = pom::karras_schedule(steps);
  const auto x_ref = domain.to_model(blank);

  std::vector<pom::RankedResult> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < n; k = next++) {
      const auto x = pom::inpaint_sample(*model, x_ref, all, schedule, {1}, eta, seed + static_cast<std::uint64_t>(k));
      auto& r = results[static_cast<std::size_t>(k)];
      r.image = domain.to_roll(x, blank);
      r.notes = pom::decode_roll(r.image).notes;
      r.rank = k + 1;
      r.seed_offset = k;
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < std::clamp(parallel, 1, std::min(n, max_parallel())); ++t) pool.emplace_back(worker);
  }
  write_outputs(out, results, {{"checkpoint", ckpt}, {"steps", steps}, {"eta", eta}, {"seed", seed}});
  std::size_t notes = 0;
  for (const auto& r : results) notes += r.notes.size();
  emit(g, {{"samples", n}, {"out", out.string()}, {"notes", notes}},
       "wrote " + std::to_string(n) + " samples (" + std::to_string(notes) + " notes) to " + out.string());
  return 0;
}

int cmd_eval(const Globals& g, const fs::path& gen, const fs::path& ref, const std::string& json_path) {
  const auto report = pom::eval::evaluate_dirs(gen, ref);
  const auto doc = report.to_json();
  if (!json_path.empty()) {
    if (json_path == "-")
      std::cout << doc.dump(2) << '\n';
    else
      pom::write_file_atomic(json_path, doc.dump(2));
  }
  if (json_path != "-") {
    char buf[256];
    std::snprintf(buf, sizeof buf, "sigma_P %.4f  IQR_D %.4f  D_P %.4f  D_D %.4f  DKL_P %.4f  DKL_D %.4f  (n_gen %zu, n_ref %zu)",
                  report.sigma_p, report.iqr_d, report.d_p, report.d_d, report.dkl_p, report.dkl_d, report.n_gen,
                  report.n_ref);
    emit(g, doc, buf);
  }
  return 0;
}

int cmd_serve(const fs::path& config) {
  auto cfg = pom::service::load_config(config);
  // Block termination signals everywhere; the main thread waits for them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  pom::service::Server server(cfg);
  const int port = server.start();
  std::cout << "listening on http://" << cfg.host << ':' << port << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  pom::log::info(std::string("received ") + (sig == SIGTERM ? "SIGTERM" : "SIGINT") + ", draining");
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piano-roll diffusion inpainting toolkit"};
  app.set_version_flag("--version", std::string(pom::kVersion));
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json_out, "Print a JSON summary instead of text");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Only log errors");

  auto* prepare = app.add_subcommand("prepare", "Render a MIDI directory into a transposed PNG dataset");
  fs::path p_in, p_out;
  int tmin = -12, tmax = 12;
  prepare->add_option("--in", p_in, "Directory of .mid files")->required();
  prepare->add_option("--out", p_out, "Output dataset directory")->required();
  prepare->add_option("--transpose-min", tmin, "Lowest transposition in semitones")->capture_default_str();
  prepare->add_option("--transpose-max", tmax, "Highest transposition in semitones")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train the toy denoiser on a prepared dataset");
  fs::path t_data, t_out, t_csv;
  pom::TrainOptions topt;
  int t_size = 64;
  train->add_option("--data", t_data, "Dataset directory")->required();
  train->add_option("--out", t_out, "Checkpoint path (.pomck)")->required();
  train->add_option("--steps", topt.steps, "Optimizer steps")->capture_default_str();
  train->add_option("--batch", topt.batch, "Batch size")->capture_default_str();
  train->add_option("--lr", topt.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--seed", topt.seed, "Seed for init, batches and noise")->capture_default_str();
  train->add_option("--size", t_size, "Model image size (256 = full folded window)")->capture_default_str();
  train->add_option("--checkpoint-every", topt.checkpoint_every, "Save every N steps (0: end only)")->capture_default_str();
  train->add_option("--loss-csv", t_csv, "Loss trace path (default: <out>.loss.csv)");

  auto* inpaint = app.add_subcommand("inpaint", "Inpaint a roll and keep the best-filled results");
  fs::path i_roll, i_out = "inpaint_out";
  std::string i_mask, i_ckpt;
  pom::GenerationJob ijob;
  int i_parallel = 1;
  inpaint->add_option("--roll", i_roll, "Reference roll (.png or .mid)")->required();
  inpaint->add_option("--mask", i_mask, "Mask PNG, mask JSON, or preset:NAME (melody, accompaniment, continuation)")
      ->required();
  inpaint->add_option("--ckpt", i_ckpt, "Checkpoint file, or 'gaussian' for the analytic prior")->required();
  inpaint->add_option("--steps", ijob.steps, "Sampler steps")->capture_default_str();
  inpaint->add_option("--repaints", ijob.repaints, "RePaint repeats per step (U)")->capture_default_str();
  inpaint->add_option("--n", ijob.n_samples, "Samples to draw")->capture_default_str();
  inpaint->add_option("--top", ijob.top_k, "Results to keep")->capture_default_str();
  inpaint->add_option("--eta", ijob.eta, "Stochasticity (0 = deterministic solver)")->capture_default_str();
  inpaint->add_option("--seed", ijob.seed, "Base seed; sample k uses seed + k")->capture_default_str();
  inpaint->add_option("--out", i_out, "Output directory")->capture_default_str();
  inpaint->add_option("--parallel", i_parallel, "Concurrent samples")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Generate unconditional samples");
  std::string s_ckpt;
  int s_n = 4, s_steps = pom::kDefaultSteps, s_parallel = 1;
  double s_eta = 1.0;
  std::uint64_t s_seed = 0;
  fs::path s_out = "samples";
  sample->add_option("--ckpt", s_ckpt, "Checkpoint file, or 'gaussian'")->required();
  sample->add_option("--n", s_n, "Number of samples")->capture_default_str();
  sample->add_option("--steps", s_steps, "Sampler steps")->capture_default_str();
  sample->add_option("--eta", s_eta, "Stochasticity")->capture_default_str();
  sample->add_option("--seed", s_seed, "Base seed")->capture_default_str();
  sample->add_option("--out", s_out, "Output directory")->capture_default_str();
  sample->add_option("--parallel", s_parallel, "Concurrent samples")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Compare generated and reference note statistics");
  fs::path e_gen, e_ref;
  std::string e_json;
  eval->add_option("--gen", e_gen, "Directory of generated PNG/MIDI")->required();
  eval->add_option("--ref", e_ref, "Directory of reference PNG/MIDI")->required();
  eval->add_option("--json", e_json, "Write the report as JSON ('-' for stdout)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP job service");
  fs::path v_config;
  serve->add_option("--config", v_config, "TOML config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  pom::log::set_level(g.verbose ? pom::log::Level::debug : g.quiet ? pom::log::Level::error : pom::log::Level::info);

  try {
    if (*prepare) return cmd_prepare(g, p_in, p_out, tmin, tmax);
    if (*train) return cmd_train(g, t_data, t_out, topt, t_size, t_csv);
    if (*inpaint) return cmd_inpaint(g, i_roll, i_mask, i_ckpt, ijob, i_out, i_parallel);
    if (*sample) return cmd_sample(g, s_ckpt, s_n, s_steps, s_eta, s_seed, s_out, s_parallel);
    if (*eval) return cmd_eval(g, e_gen, e_ref, e_json);
    if (*serve) return cmd_serve(v_config);
  } catch (const pom::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const pom::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
