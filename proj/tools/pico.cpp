// Copyright 2026 The pico Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// pico command-line interface.
//
// Exit codes: 0 success, 2 malformed input file, 3 failed precondition or
// bad argument, 4 failed numerical check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pico/binio.hpp"
#include "pico/error.hpp"
#include "pico/parallel.hpp"
#include "pico/pipeline.hpp"
#include "pico/synth.hpp"

namespace {

using namespace pico;
using Bytes = std::vector<std::uint8_t>;

constexpr int kExitFormat = 2;
constexpr int kExitPrecondition = 3;
constexpr int kExitNumerical = 4;
constexpr double kGradTolerance = 1e-5;

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return binio::slurp(in);
}

std::string read_text(const std::string& path) {
  const Bytes b = read_file(path);
  return {b.begin(), b.end()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  if (path == "-") {
    binio::spill(std::cout, bytes);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  binio::spill(out, bytes);
  if (!out) throw IoError("write failed: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// Pipeline settings shared by track / sample / pairs. Flags override the
// --config document, which overrides the defaults.
struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<float> gamma;
  std::optional<float> delta;
  std::optional<std::size_t> points;
  std::optional<std::size_t> n;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> videos;
  std::optional<std::uint32_t> scale;
  std::optional<std::string> sampling;
  std::optional<std::string> correspondence;
  std::optional<std::uint32_t> stride;
  std::optional<std::string> budget_mode;

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : config_from_json(read_text(config));
    nlohmann::json j = nlohmann::json::parse(config_to_json(cfg));
    if (seed) j["seed"] = *seed;
    if (gamma) j["gamma"] = *gamma;
    if (delta) j["delta"] = *delta;
    if (points) j["points_per_video"] = *points;
    if (n) j["n_frames"] = *n;
    if (budget) j["budget"] = *budget;
    if (videos) j["videos_per_iteration"] = *videos;
    if (scale) j["feature_scale"] = *scale;
    if (sampling) j["sampling"] = *sampling;
    if (correspondence) j["correspondence"] = *correspondence;
    if (stride) j["static_stride"] = *stride;
    if (budget_mode) j["budget_mode"] = *budget_mode;
    return config_from_json(j.dump());
  }
};

void add_config(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Random seed");
}

void add_threshold(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--gamma", f.gamma, "Relative consistency tolerance (default 0)");
  cmd->add_option("--delta", f.delta, "Absolute consistency tolerance in px^2 (default 4)");
}

unsigned add_threads(CLI::App* cmd, unsigned& threads) {
  threads = threads_from_env();
  cmd->add_option("--threads", threads, "Worker threads (default $PICO_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  return threads;
}

std::string stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

EmbeddingBatch load_embeddings(const std::string& path, double tau, std::size_t k) {
  return batch_from_tensors(decode_tensors(read_file(path)), tau, k);
}

std::string stats_json(const TrajectorySet& set) {
  const TrajectoryStats s = trajectory_stats(set);
  nlohmann::ordered_json j;
  j["video"] = set.video_id;
  j["frames"] = set.num_frames;
  j["gamma"] = set.params.gamma;
  j["delta"] = set.params.delta;
  j["count"] = s.count;
  j["mean_span"] = s.mean_span;
  j["stops"] = {{"consistency", s.stop_counts[0]},
                {"out_of_bounds", s.stop_counts[1]},
                {"end_of_video", s.stop_counts[2]}};
  j["length_histogram"] = s.length_histogram;
  return j.dump();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("bad number \"" + item + "\" in list");
    }
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Flow-tracked pixel correspondences and InfoNCE evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // encode-flow
  struct {
    std::string in, out;
    std::uint32_t frames = 0, width = 0, height = 0;
    bool no_backward = false;
  } enc;
  auto* encode = app.add_subcommand("encode-flow", "Raw planar f32 flow -> FlowPack");
  encode->add_option("input", enc.in, "Raw planar file")->required();
  encode->add_option("output", enc.out, "FlowPack file")->required();
  encode->add_option("--frames", enc.frames, "Frame count T")->required();
  encode->add_option("--width", enc.width, "Width")->required();
  encode->add_option("--height", enc.height, "Height")->required();
  encode->add_flag("--no-backward", enc.no_backward, "Input holds forward fields only");

  // decode-flow
  struct {
    std::string in, out;
  } dec;
  auto* decode = app.add_subcommand("decode-flow", "FlowPack -> raw planar f32 flow");
  decode->add_option("input", dec.in, "FlowPack file")->required();
  decode->add_option("output", dec.out, "Raw planar file")->required();

  // synth
  struct {
    std::string scene, out;
  } syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic FlowPack");
  synth->add_option("--scene", syn.scene, "Scene JSON file")->required();
  synth->add_option("output", syn.out, "FlowPack file")->required();

  // track
  RunFlags trk;
  struct {
    std::string in, out, video_id;
    bool permissive = false, no_residuals = false;
    std::uint32_t grid = 0;
    unsigned threads = 1;
  } tr;
  auto* track_cmd = app.add_subcommand("track", "Track points through a FlowPack");
  track_cmd->add_option("input", tr.in, "FlowPack file")->required();
  track_cmd->add_option("output", tr.out, "Trajectory file (- for stdout)")->required();
  add_config(track_cmd, trk);
  add_threshold(track_cmd, trk);
  track_cmd->add_option("--points", trk.points, "Random seeds per video (default 1000)");
  track_cmd->add_option("--grid-stride", tr.grid, "Seed a regular grid on frame 0 instead");
  track_cmd->add_option("--video-id", tr.video_id, "Video id (default: input file stem)");
  track_cmd->add_flag("--permissive-residuals", tr.permissive,
                      "Track without truncation so any threshold can be applied later");
  track_cmd->add_flag("--no-residuals", tr.no_residuals, "Do not store residuals");
  add_threads(track_cmd, tr.threads);

  // rethreshold
  RunFlags rth;
  struct {
    std::string in, out;
  } rt;
  auto* reth = app.add_subcommand("rethreshold", "Re-truncate stored trajectories");
  reth->add_option("input", rt.in, "Trajectory file")->required();
  reth->add_option("output", rt.out, "Trajectory file (- for stdout)")->required();
  add_threshold(reth, rth);

  // sample
  RunFlags smp;
  struct {
    std::string in, mode = "anchor";
    std::optional<std::uint32_t> anchor;
  } sm;
  auto* sample = app.add_subcommand("sample", "Select frames for one video");
  sample->add_option("input", sm.in, "Trajectory file")->required();
  sample->add_option("--mode", sm.mode, "anchor or random")
      ->check(CLI::IsMember({"anchor", "random"}));
  sample->add_option("--anchor-frame", sm.anchor, "Anchor frame (anchor mode; default drawn)");
  sample->add_option("--n", smp.n, "Frames to select besides the anchor (default 1)");
  add_config(sample, smp);

  // pairs
  RunFlags prs;
  struct {
    std::vector<std::string> in;
    std::string out = "-", views;
    unsigned threads = 1;
  } pr;
  auto* pairs = app.add_subcommand("pairs", "Budgeted correspondence batch as JSON lines");
  pairs->add_option("inputs", pr.in, "Trajectory files")->required();
  pairs->add_option("-o,--output", pr.out, "JSON lines output (default stdout)");
  pairs->add_option("--views", pr.views, "View geometry JSON file")->check(CLI::ExistingFile);
  add_config(pairs, prs);
  pairs->add_option("--budget", prs.budget, "Maximum pairs (default 65536)");
  pairs->add_option("--scale", prs.scale, "Feature stride (default 4)");
  pairs->add_option("--n", prs.n, "Partner frames per anchor (default 1)");
  pairs->add_option("--videos", prs.videos, "Videos per batch (default 256)");
  pairs->add_option("--sampling", prs.sampling, "anchor or random");
  pairs->add_option("--mode", prs.correspondence, "tracked or static");
  pairs->add_option("--stride", prs.stride, "Static grid stride (default 4)");
  pairs->add_option("--budget-mode", prs.budget_mode, "uniform or per_video");
  add_threads(pairs, pr.threads);

  // loss / gradcheck
  struct {
    std::string in, grad_out;
    double tau = 0.2, step = 1e-5;
    std::size_t k = 0;
  } ls;
  auto* loss = app.add_subcommand("loss", "InfoNCE loss of an embedding file");
  auto* gradcheck = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradient");
  for (auto* cmd : {loss, gradcheck}) {
    cmd->add_option("--embeddings", ls.in, "Tensor file: queries, positives, negatives")
        ->required();
    cmd->add_option("--tau", ls.tau, "Temperature (default 0.2)");
    cmd->add_option("--k", ls.k, "Use K-1 negatives from the bank (default: all)");
  }
  loss->add_option("--grad", ls.grad_out, "Write gradients as a tensor file");
  gradcheck->add_option("--step", ls.step, "Finite-difference step (default 1e-5)");

  // stats
  struct {
    std::string in, sweep;
  } st;
  auto* stats = app.add_subcommand("stats", "Trajectory length and stop statistics");
  stats->add_option("input", st.in, "Trajectory file")->required();
  stats->add_option("--sweep-delta", st.sweep,
                    "Comma-separated delta values, e.g. 1,2,4,8,16 (needs residuals)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitPrecondition;
  }

  if (*encode) {
    const Bytes raw = read_file(enc.in);
    const FlowVolume v = decode_raw_planar(raw, enc.frames, enc.width, enc.height,
                                           !enc.no_backward);
    write_file(enc.out, encode_flowpack(v));
  } else if (*decode) {
    const FlowVolume v = decode_flowpack(read_file(dec.in));
    write_file(dec.out, encode_raw_planar(v));
    nlohmann::ordered_json j;
    j["frames"] = v.num_frames();
    j["width"] = v.width();
    j["height"] = v.height();
    j["backward"] = v.has_backward();
    std::cout << j.dump() << "\n";
  } else if (*synth) {
    write_file(syn.out, encode_flowpack(generate(scene_from_json(read_text(syn.scene)))));
  } else if (*track_cmd) {
    if (tr.permissive && (trk.gamma || trk.delta)) {
      throw InvalidArgument("--permissive-residuals cannot be combined with --gamma/--delta");
    }
    if (tr.permissive && tr.no_residuals) {
      throw InvalidArgument("--permissive-residuals needs residuals");
    }
    RunConfig cfg = trk.resolve();
    if (tr.permissive) cfg.params = ThresholdParams::permissive();
    if (tr.no_residuals) cfg.store_residuals = false;
    const FlowVolume volume = decode_flowpack(read_file(tr.in));
    const std::string id = tr.video_id.empty() ? stem(tr.in) : tr.video_id;
    TrajectorySet set;
    if (tr.grid > 0) {
      set = track(volume, seed_grid(volume.width(), volume.height(), tr.grid, 0), cfg.params,
                  cfg.store_residuals, tr.threads);
      set.video_id = id;
      set.seed = cfg.seed;
    } else {
      set = track_video(volume, cfg, id, tr.threads);
    }
    write_file(tr.out, encode_pctr(set));
  } else if (*reth) {
    const TrajectorySet set = decode_pctr(read_file(rt.in));
    ThresholdParams p = set.params.is_permissive() ? ThresholdParams{} : set.params;
    if (rth.gamma) p.gamma = *rth.gamma;
    if (rth.delta) p.delta = *rth.delta;
    p.validate();
    write_file(rt.out, encode_pctr(rethreshold(set, p)));
  } else if (*sample) {
    const TrajectorySet set = decode_pctr(read_file(sm.in));
    RunConfig cfg = smp.resolve();
    cfg.sampling = sm.mode == "anchor" ? Sampling::kAnchor : Sampling::kRandom;
    if (cfg.sampling == Sampling::kAnchor) {
      const std::uint32_t anchor = sm.anchor ? *sm.anchor : plan_frames(set, cfg, 0).anchor;
      std::cout << plan_to_json(anchor_sample(set, anchor, cfg.n_frames)) << "\n";
    } else {
      if (sm.anchor) throw InvalidArgument("--anchor-frame applies to anchor mode only");
      const FramePlan plan = plan_frames(set, cfg, 0);
      nlohmann::ordered_json j;
      j["anchor"] = plan.anchor;
      j["frames"] = plan.partners;
      std::cout << j.dump() << "\n";
    }
  } else if (*pairs) {
    const RunConfig cfg = prs.resolve();
    const ViewPair views = pr.views.empty() ? ViewPair{} : views_from_json(read_text(pr.views));
    std::vector<TrajectorySet> sets;
    for (const auto& path : pr.in) sets.push_back(decode_pctr(read_file(path)));
    const CorrespondenceBatch batch = build_batch(sets, cfg, views, pr.threads);
    std::ostringstream out;
    write_pairs_jsonl(batch, out);
    write_text(pr.out, out.str());
  } else if (*loss) {
    const EmbeddingBatch batch = load_embeddings(ls.in, ls.tau, ls.k);
    const LossResult r = evaluate_loss(batch);
    nlohmann::ordered_json j;
    j["loss"] = r.loss;
    j["queries"] = batch.rows();
    j["k"] = batch.num_negatives() + 1;
    j["tau"] = batch.temperature;
    std::cout << j.dump() << "\n";
    if (!ls.grad_out.empty()) {
      const std::vector<Matrix> g = {r.gradients.queries, r.gradients.positives,
                                     r.gradients.negatives};
      write_file(ls.grad_out, encode_tensors(g));
    }
  } else if (*gradcheck) {
    const EmbeddingBatch batch = load_embeddings(ls.in, ls.tau, ls.k);
    const GradCheckReport r = check_gradient(batch, ls.step);
    const bool ok = r.max_rel_error < kGradTolerance;
    nlohmann::ordered_json j;
    j["max_rel_error"] = r.max_rel_error;
    j["max_abs_error"] = r.max_abs_error;
    j["tolerance"] = kGradTolerance;
    j["pass"] = ok;
    std::cout << j.dump() << "\n";
    if (!ok) return kExitNumerical;
  } else if (*stats) {
    const TrajectorySet set = decode_pctr(read_file(st.in));
    if (st.sweep.empty()) {
      std::cout << stats_json(set) << "\n";
    } else {
      for (double d : parse_list(st.sweep)) {
        ThresholdParams p = set.params.is_permissive() ? ThresholdParams{} : set.params;
        p.delta = static_cast<float>(d);
        p.validate();
        std::cout << stats_json(rethreshold(set, p)) << "\n";
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pico::FormatError& e) {
    std::cerr << "pico: format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const pico::Error& e) {
    std::cerr << "pico: " << pico::to_string(e.kind()) << ": " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "pico: " << e.what() << "\n";
    return 1;
  }
}
