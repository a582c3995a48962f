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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pico/tracker.hpp"

namespace pico {

struct AnchorPlan {
  std::uint32_t anchor_frame = 0;
  // Most endpoints first; ties go to the frame further from the anchor,
  // then to the lower index.
  std::vector<std::uint32_t> selected_frames;
  // Furthest-endpoint histogram over every non-anchor frame that has one.
  std::map<std::uint32_t, std::uint32_t> endpoint_counts;
  std::size_t n_requested = 0;

  friend bool operator==(const AnchorPlan&, const AnchorPlan&) = default;
};

// Indices of trajectories whose span contains frame. Throws OutOfBounds for
// frame >= T.
std::vector<std::size_t> active_trajectories(const TrajectorySet& set,
                                             std::uint32_t frame);

// For every trajectory active on the anchor, takes the span endpoint
// furthest from it (the later one on a tie), histograms those frames and
// keeps the top n. Endpoints equal to the anchor are never selected.
AnchorPlan anchor_sample(const TrajectorySet& set, std::uint32_t anchor,
                         std::size_t n);

// n distinct frames drawn uniformly without replacement, ascending.
// Throws InsufficientFrames when n > T and InvalidArgument when n < 2.
std::vector<std::uint32_t> random_sample(const TrajectorySet& set,
                                         std::size_t n, std::uint64_t rng_seed);
std::vector<std::uint32_t> random_sample(std::uint32_t num_frames,
                                         std::size_t n, std::uint64_t rng_seed);

// {"anchor": a, "frames": [...], "counts": {"frame": count, ...}}
std::string plan_to_json(const AnchorPlan& plan);

}  // namespace pico
