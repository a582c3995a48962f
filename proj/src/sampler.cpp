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

#include "pico/sampler.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "pico/error.hpp"
#include "pico/rng.hpp"

namespace pico {

std::vector<std::size_t> active_trajectories(const TrajectorySet& set,
                                             std::uint32_t frame) {
  if (frame >= set.num_frames) {
    throw OutOfBounds("frame " + std::to_string(frame) + " outside video of " +
                      std::to_string(set.num_frames) + " frames");
  }
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < set.trajectories.size(); ++i) {
    if (set.trajectories[i].active_on(frame)) ids.push_back(i);
  }
  return ids;
}

AnchorPlan anchor_sample(const TrajectorySet& set, std::uint32_t anchor,
                         std::size_t n) {
  AnchorPlan plan;
  plan.anchor_frame = anchor;
  plan.n_requested = n;
  for (std::size_t id : active_trajectories(set, anchor)) {
    const Trajectory& tr = set.trajectories[id];
    const std::uint32_t s = tr.start_frame, e = tr.end_frame();
    const std::uint32_t far = (anchor - s) > (e - anchor) ? s : e;
    if (far != anchor) ++plan.endpoint_counts[far];
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranked(
      plan.endpoint_counts.begin(), plan.endpoint_counts.end());
  auto distance = [anchor](std::uint32_t f) {
    return f > anchor ? f - anchor : anchor - f;
  };
  std::sort(ranked.begin(), ranked.end(), [&](const auto& l, const auto& r) {
    if (l.second != r.second) return l.second > r.second;
    if (distance(l.first) != distance(r.first)) {
      return distance(l.first) > distance(r.first);
    }
    return l.first < r.first;
  });
  for (std::size_t i = 0; i < ranked.size() && i < n; ++i) {
    plan.selected_frames.push_back(ranked[i].first);
  }
  return plan;
}

std::vector<std::uint32_t> random_sample(std::uint32_t num_frames,
                                         std::size_t n, std::uint64_t rng_seed) {
  if (n < 2) throw InvalidArgument("random frame sampling needs n >= 2");
  if (n > num_frames) {
    throw InsufficientFrames("cannot draw " + std::to_string(n) +
                             " distinct frames from " +
                             std::to_string(num_frames));
  }
  // Partial Fisher-Yates.
  std::vector<std::uint32_t> frames(num_frames);
  std::iota(frames.begin(), frames.end(), 0u);
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(num_frames - i);
    std::swap(frames[i], frames[j]);
  }
  frames.resize(n);
  std::sort(frames.begin(), frames.end());
  return frames;
}

std::vector<std::uint32_t> random_sample(const TrajectorySet& set,
                                         std::size_t n, std::uint64_t rng_seed) {
  return random_sample(set.num_frames, n, rng_seed);
}

std::string plan_to_json(const AnchorPlan& plan) {
  nlohmann::ordered_json j;
  j["anchor"] = plan.anchor_frame;
  j["frames"] = plan.selected_frames;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [frame, count] : plan.endpoint_counts) {
    counts[std::to_string(frame)] = count;
  }
  j["counts"] = counts;
  return j.dump();
}

}  // namespace pico
