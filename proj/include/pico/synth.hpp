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
#include <string>
#include <vector>

#include "pico/flowstore.hpp"
#include "pico/tracker.hpp"

namespace pico {

enum class MotionKind { kZero, kConstant, kRotation, kZoom, kOccluder };
enum class BackwardMode { kExactInverse, kCorrupted };

// Axis-aligned region [x, x+w) x [y, y+h) in pixel coordinates.
struct Region {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool contains(double px, double py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  Region shifted(double dx, double dy) const { return {x + dx, y + dy, w, h}; }
};

// Closed-form synthetic motion. Rigid rotation and zoom act about
// `center`; the occluder is a rectangle translating by `occluder_velocity`
// per frame over a background translating by `velocity`.
struct SceneSpec {
  MotionKind kind = MotionKind::kZero;
  std::uint32_t width = 32;
  std::uint32_t height = 32;
  std::uint32_t frames = 2;
  FlowVec velocity;               // constant / occluder background
  Point2d center;                 // rotation / zoom
  double degrees_per_frame = 0.0;
  double scale_per_frame = 1.0;
  Region occluder;                // position on frame 0
  FlowVec occluder_velocity;
  BackwardMode backward = BackwardMode::kExactInverse;
  Region corrupt_region;          // static, backward fields only
  FlowVec corrupt_vector;

  // Throws InvalidArgument for non-finite parameters, T < 2, empty size or
  // a non-positive zoom factor.
  void validate() const;
};

// Parses the JSON scene document (see README). Throws InvalidArgument.
SceneSpec scene_from_json(const std::string& text);

// Forward flow sampled from the motion field at lattice points; backward
// flow is its exact inverse except inside the corrupted region.
FlowVolume generate(const SceneSpec& spec);

// Closed-form positions of a point seeded at `seed` for `steps` frames
// (steps + 1 positions, the seed first). No flow sampling is involved.
std::vector<Point2d> ground_truth_track(const SceneSpec& spec,
                                        const SeedPoint& seed,
                                        std::uint32_t steps);

struct ExpectedStop {
  std::uint32_t end_frame = 0;  // last frame kept in the trajectory
  StopReason reason = StopReason::kEndOfVideo;
  // Set when the outcome is too close to a decision boundary to be
  // predicted exactly: a consistency margin under `guard` px^2, a point
  // within 1e-3 px of the frame edge, or a bilinear support straddling a
  // region boundary.
  bool ambiguous = false;
};

// Evaluates the consistency test in closed form along ground_truth_track().
ExpectedStop expected_stop(const SceneSpec& spec, const SeedPoint& seed,
                           const ThresholdParams& params, double guard = 1e-2);

}  // namespace pico
