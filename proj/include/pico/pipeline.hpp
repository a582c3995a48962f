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

#pragma once

// End-to-end wiring: flow volume -> trajectories -> frame plan -> pair
// batch. The CLI and the language bindings both go through these entry
// points, so the two surfaces produce identical bytes.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pico/correspond.hpp"
#include "pico/flowstore.hpp"
#include "pico/nce.hpp"
#include "pico/sampler.hpp"
#include "pico/tracker.hpp"

namespace pico {

enum class Sampling { kAnchor, kRandom };
enum class Correspondence { kTracked, kStatic };

struct RunConfig {
  std::uint64_t seed = 0;
  ThresholdParams params;                 // gamma = 0, delta = 4
  std::size_t points_per_video = 1000;
  std::size_t n_frames = 1;               // partners per anchor
  std::size_t budget = 65536;
  std::size_t videos_per_iteration = 256;
  std::uint32_t feature_scale = 4;
  Sampling sampling = Sampling::kAnchor;
  Correspondence correspondence = Correspondence::kTracked;
  std::uint32_t static_stride = 4;
  bool store_residuals = true;
  BudgetMode budget_mode = BudgetMode::kUniform;

  void validate() const;
};

// Keys absent from the document keep their defaults. Throws
// InvalidArgument on unknown keys or bad values.
RunConfig config_from_json(const std::string& text, RunConfig base = {});
std::string config_to_json(const RunConfig& cfg);

// Geometry of the two views; an absent side is the identity view of the
// video it is applied to.
struct ViewPair {
  std::optional<ViewGeometry> a;
  std::optional<ViewGeometry> b;
};
ViewPair views_from_json(const std::string& text);

// seed_points(points_per_video, seed) followed by track().
TrajectorySet track_video(const FlowVolume& volume, const RunConfig& cfg,
                          const std::string& video_id, unsigned threads = 1);
TrajectorySet track_flowpack(std::span<const std::uint8_t> flowpack,
                             const RunConfig& cfg, const std::string& video_id,
                             unsigned threads = 1);

struct FramePlan {
  std::uint32_t anchor = 0;
  std::vector<std::uint32_t> partners;
};

// Anchor mode: a uniform anchor frame and the anchor_sample() top-N.
// Random mode: N+1 distinct uniform frames, one of them (uniformly) the
// anchor. `stream` selects the per-video random stream.
FramePlan plan_frames(const TrajectorySet& set, const RunConfig& cfg,
                      std::uint64_t stream);

// Anchor-to-partner pairs for one video after view mapping.
std::vector<PixelPair> video_pairs(const TrajectorySet& set, const RunConfig& cfg,
                                   const ViewPair& views, std::uint64_t stream);

// Picks up to videos_per_iteration videos, builds their pair lists on
// `threads` workers and assembles the budgeted batch. All videos must
// share a frame size unless both views are given explicitly.
CorrespondenceBatch build_batch(const std::vector<TrajectorySet>& sets,
                                const RunConfig& cfg, const ViewPair& views,
                                unsigned threads = 1);

struct LossResult {
  double loss = 0.0;
  NceGradients gradients;
};
LossResult evaluate_loss(const EmbeddingBatch& batch);

}  // namespace pico
