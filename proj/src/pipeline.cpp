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

#include "pico/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include "pico/error.hpp"
#include "pico/parallel.hpp"
#include "pico/rng.hpp"

namespace pico {

namespace {

// Salts separating the random streams drawn from one run seed.
constexpr std::uint64_t kAnchorSalt = 0xA5C3'0001'0000'0000ULL;
constexpr std::uint64_t kVideoSalt = 0xA5C3'0002'0000'0000ULL;
constexpr std::uint64_t kBudgetSalt = 0xA5C3'0003'0000'0000ULL;

using nlohmann::json;

ViewGeometry view_from_json(const json& j) {
  ViewGeometry g;
  const auto& crop = j.at("crop");
  if (!crop.is_array() || crop.size() != 4) {
    throw InvalidArgument("\"crop\" must be [x, y, w, h]");
  }
  g.crop_x = crop[0].get<std::uint32_t>();
  g.crop_y = crop[1].get<std::uint32_t>();
  g.crop_w = crop[2].get<std::uint32_t>();
  g.crop_h = crop[3].get<std::uint32_t>();
  g.flip_h = j.value("flip", false);
  if (j.contains("out")) {
    g.out = {j.at("out").at(0).get<std::uint32_t>(),
             j.at("out").at(1).get<std::uint32_t>()};
  } else {
    g.out = {g.crop_w, g.crop_h};
  }
  return g;
}

Size2 view_size(const std::optional<ViewGeometry>& v, const TrajectorySet& set) {
  return v ? v->out : Size2{set.width, set.height};
}

ViewGeometry resolve(const std::optional<ViewGeometry>& v, const TrajectorySet& set) {
  ViewGeometry g = v ? *v : ViewGeometry::identity(set.width, set.height);
  g.validate(set.width, set.height);
  return g;
}

}  // namespace

void RunConfig::validate() const {
  params.validate();
  if (points_per_video == 0 || n_frames == 0 || budget == 0 ||
      videos_per_iteration == 0 || feature_scale == 0 || static_stride == 0) {
    throw InvalidArgument("all counts must be >= 1");
  }
}

RunConfig config_from_json(const std::string& text, RunConfig cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  static const std::set<std::string> known = {
      "seed", "gamma", "delta", "points_per_video", "n_frames", "budget",
      "videos_per_iteration", "feature_scale", "sampling", "correspondence",
      "static_stride", "store_residuals", "budget_mode"};
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw InvalidArgument("unknown config key \"" + key + "\"");
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.params.gamma = j.value("gamma", cfg.params.gamma);
    cfg.params.delta = j.value("delta", cfg.params.delta);
    cfg.points_per_video = j.value("points_per_video", cfg.points_per_video);
    cfg.n_frames = j.value("n_frames", cfg.n_frames);
    cfg.budget = j.value("budget", cfg.budget);
    cfg.videos_per_iteration = j.value("videos_per_iteration", cfg.videos_per_iteration);
    cfg.feature_scale = j.value("feature_scale", cfg.feature_scale);
    cfg.static_stride = j.value("static_stride", cfg.static_stride);
    cfg.store_residuals = j.value("store_residuals", cfg.store_residuals);
    if (j.contains("sampling")) {
      const auto s = j.at("sampling").get<std::string>();
      if (s == "anchor") cfg.sampling = Sampling::kAnchor;
      else if (s == "random") cfg.sampling = Sampling::kRandom;
      else throw InvalidArgument("sampling must be \"anchor\" or \"random\"");
    }
    if (j.contains("correspondence")) {
      const auto s = j.at("correspondence").get<std::string>();
      if (s == "tracked") cfg.correspondence = Correspondence::kTracked;
      else if (s == "static") cfg.correspondence = Correspondence::kStatic;
      else throw InvalidArgument("correspondence must be \"tracked\" or \"static\"");
    }
    if (j.contains("budget_mode")) {
      const auto s = j.at("budget_mode").get<std::string>();
      if (s == "uniform") cfg.budget_mode = BudgetMode::kUniform;
      else if (s == "per_video") cfg.budget_mode = BudgetMode::kPerVideoQuota;
      else throw InvalidArgument("budget_mode must be \"uniform\" or \"per_video\"");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["gamma"] = cfg.params.gamma;
  j["delta"] = cfg.params.delta;
  j["points_per_video"] = cfg.points_per_video;
  j["n_frames"] = cfg.n_frames;
  j["budget"] = cfg.budget;
  j["videos_per_iteration"] = cfg.videos_per_iteration;
  j["feature_scale"] = cfg.feature_scale;
  j["sampling"] = cfg.sampling == Sampling::kAnchor ? "anchor" : "random";
  j["correspondence"] = cfg.correspondence == Correspondence::kTracked ? "tracked" : "static";
  j["static_stride"] = cfg.static_stride;
  j["store_residuals"] = cfg.store_residuals;
  j["budget_mode"] = cfg.budget_mode == BudgetMode::kUniform ? "uniform" : "per_video";
  return j.dump();
}

ViewPair views_from_json(const std::string& text) {
  ViewPair v;
  try {
    const json j = json::parse(text);
    if (j.contains("a")) v.a = view_from_json(j.at("a"));
    if (j.contains("b")) v.b = view_from_json(j.at("b"));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad view document: ") + e.what());
  }
  return v;
}

TrajectorySet track_video(const FlowVolume& volume, const RunConfig& cfg,
                          const std::string& video_id, unsigned threads) {
  cfg.validate();
  const auto seeds = seed_points(volume, cfg.points_per_video, cfg.seed);
  TrajectorySet set = track(volume, seeds, cfg.params, cfg.store_residuals, threads);
  set.video_id = video_id;
  set.seed = cfg.seed;
  return set;
}

TrajectorySet track_flowpack(std::span<const std::uint8_t> flowpack,
                             const RunConfig& cfg, const std::string& video_id,
                             unsigned threads) {
  return track_video(decode_flowpack(flowpack), cfg, video_id, threads);
}

FramePlan plan_frames(const TrajectorySet& set, const RunConfig& cfg,
                      std::uint64_t stream) {
  if (set.num_frames == 0) throw DegenerateVideo("video has no frames");
  Rng rng = Rng::stream(cfg.seed ^ kAnchorSalt, stream);
  FramePlan plan;
  if (cfg.sampling == Sampling::kAnchor) {
    plan.anchor = static_cast<std::uint32_t>(rng.below(set.num_frames));
    plan.partners = anchor_sample(set, plan.anchor, cfg.n_frames).selected_frames;
    return plan;
  }
  const std::size_t want = std::min<std::size_t>(cfg.n_frames + 1, set.num_frames);
  std::vector<std::uint32_t> frames = random_sample(set, want, rng.next());
  const std::size_t pick = rng.below(frames.size());
  plan.anchor = frames[pick];
  frames.erase(frames.begin() + static_cast<std::ptrdiff_t>(pick));
  plan.partners = std::move(frames);
  return plan;
}

std::vector<PixelPair> video_pairs(const TrajectorySet& set, const RunConfig& cfg,
                                   const ViewPair& views, std::uint64_t stream) {
  const ViewGeometry ga = resolve(views.a, set), gb = resolve(views.b, set);
  const FramePlan plan = plan_frames(set, cfg, stream);
  std::vector<PixelPair> out;
  for (std::uint32_t partner : plan.partners) {
    std::vector<PixelPair> raw =
        cfg.correspondence == Correspondence::kTracked
            ? pairs_from_trajectories(set, plan.anchor, partner)
            : static_pairs(plan.anchor, partner, cfg.static_stride, set.width,
                           set.height);
    std::vector<PixelPair> mapped = apply_view(raw, ga, gb);
    out.insert(out.end(), mapped.begin(), mapped.end());
  }
  return out;
}

CorrespondenceBatch build_batch(const std::vector<TrajectorySet>& sets,
                                const RunConfig& cfg, const ViewPair& views,
                                unsigned threads) {
  cfg.validate();
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return sets[l].video_id < sets[r].video_id;
  });
  if (order.size() > cfg.videos_per_iteration) {
    // Seeded subset, kept in id order.
    Rng rng(cfg.seed ^ kVideoSalt);
    for (std::size_t i = 0; i < cfg.videos_per_iteration; ++i) {
      std::swap(order[i], order[i + rng.below(order.size() - i)]);
    }
    order.resize(cfg.videos_per_iteration);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
      return sets[l].video_id < sets[r].video_id;
    });
  }

  FeatureLayout layout;
  layout.scale = cfg.feature_scale;
  if (!order.empty()) {
    const TrajectorySet& first = sets[order.front()];
    layout.view_a = view_size(views.a, first);
    layout.view_b = view_size(views.b, first);
    for (std::size_t i : order) {
      if (view_size(views.a, sets[i]) != layout.view_a ||
          view_size(views.b, sets[i]) != layout.view_b) {
        throw InvalidArgument("videos of different sizes need explicit views");
      }
    }
  }

  std::vector<VideoPairs> lists(order.size());
  parallel_for(order.size(), threads, [&](std::size_t k) {
    const TrajectorySet& set = sets[order[k]];
    lists[k].video_id = set.video_id;
    lists[k].pairs = video_pairs(set, cfg, views, k);
  });
  return assemble_batch(std::move(lists), cfg.budget, cfg.seed ^ kBudgetSalt,
                        layout, cfg.budget_mode);
}

LossResult evaluate_loss(const EmbeddingBatch& batch) {
  LossResult r;
  r.gradients = info_nce_grad(batch);
  r.loss = r.gradients.loss;
  return r;
}

}  // namespace pico
