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

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pico/flowstore.hpp"

namespace pico {

// Forward-backward consistency threshold: a step survives iff
//   |w + w_hat|^2 < gamma (|w|^2 + |w_hat|^2) + delta.
// Stored single precision (that is what the PCTR header carries), compared
// in double.
struct ThresholdParams {
  float gamma = 0.0f;
  float delta = 4.0f;

  // Bounds-only stopping. Tracks built this way carry full paths plus
  // residuals and can be rethresholded to any (gamma, delta).
  static ThresholdParams permissive() {
    return {0.0f, std::numeric_limits<float>::infinity()};
  }
  bool is_permissive() const {
    return delta == std::numeric_limits<float>::infinity();
  }

  // Throws InvalidArgument unless gamma is finite and >= 0 and delta is
  // >= 0 (finite, or +inf for the permissive sentinel).
  void validate() const;

  bool accepts(double a, double b) const {
    return a < static_cast<double>(gamma) * b + static_cast<double>(delta);
  }

  friend bool operator==(const ThresholdParams&, const ThresholdParams&) = default;
};

enum class StopReason : std::uint8_t {
  kConsistency = 0,
  kOutOfBounds = 1,
  kEndOfVideo = 2,
};

const char* to_string(StopReason r);

struct Point2f {
  float x = 0.0f;
  float y = 0.0f;
  friend bool operator==(const Point2f&, const Point2f&) = default;
};

struct Point2d {
  double x = 0.0;
  double y = 0.0;
};

// Per-step consistency terms a = |w + w_hat|^2 and b = |w|^2 + |w_hat|^2.
struct Residual {
  Eigen::half a;
  Eigen::half b;
};

struct Trajectory {
  std::uint32_t start_frame = 0;
  std::vector<Point2f> points;       // one per frame of the span
  std::vector<Residual> residuals;   // points.size() - 1 entries, or none
  StopReason stop = StopReason::kEndOfVideo;

  std::uint32_t length() const { return static_cast<std::uint32_t>(points.size()); }
  std::uint32_t end_frame() const { return start_frame + length() - 1; }
  bool active_on(std::uint32_t f) const {
    return f >= start_frame && f <= end_frame();
  }
  const Point2f& at_frame(std::uint32_t f) const { return points[f - start_frame]; }
};

struct TrajectorySet {
  std::string video_id;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t num_frames = 0;
  std::vector<Trajectory> trajectories;
  std::uint64_t seed = 0;
  ThresholdParams params;

  // False if any multi-point trajectory lacks its residuals.
  bool has_residuals() const;
};

struct SeedPoint {
  std::uint32_t frame = 0;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const SeedPoint&, const SeedPoint&) = default;
};

// n starting points, uniform over frames [0, T-2] and the continuous
// rectangle [0, W-1] x [0, H-1]. Point i is drawn from Rng::stream(seed, i).
// Throws DegenerateVideo when T < 2.
std::vector<SeedPoint> seed_points(const FlowVolume& volume, std::size_t count,
                                   std::uint64_t rng_seed);
std::vector<SeedPoint> seed_points(std::uint32_t num_frames, std::uint32_t width,
                                   std::uint32_t height, std::size_t count,
                                   std::uint64_t rng_seed);

// Regular grid of cell centres (stride-1)/2 + k*stride on one frame, row
// major. Same lattice as static_pairs().
std::vector<SeedPoint> seed_grid(std::uint32_t width, std::uint32_t height,
                                 std::uint32_t stride, std::uint32_t frame = 0);

// One tracking step: point plus forward flow sampled at the point.
Point2d advect(const FlowVolume& volume, std::uint32_t frame, Point2d p);

struct ConsistencyTerms {
  double a = 0.0;
  double b = 0.0;
};

// w = forward(t)(p), w_hat = backward(t)(p + w). Throws OutOfBounds when p
// or p + w falls outside the frame.
ConsistencyTerms consistency_residual(const FlowVolume& volume,
                                      std::uint32_t frame, Point2d p);

// Grows every seed forward until the consistency test fails (the failing
// step is dropped), a lookup leaves the frame, or frame T-1 is reached.
// Output order follows seed order regardless of `threads`.
TrajectorySet track(const FlowVolume& volume, std::span<const SeedPoint> seeds,
                    const ThresholdParams& params, bool store_residuals,
                    unsigned threads = 1);

// Truncates each trajectory at its first stored step failing new_params.
// Throws MissingResiduals without residuals and PermissivenessError when
// new_params would accept a step the build params rejected.
TrajectorySet rethreshold(const TrajectorySet& set,
                          const ThresholdParams& new_params);

struct TrajectoryStats {
  std::size_t count = 0;
  // length_histogram[L] = number of trajectories with L points.
  std::vector<std::uint64_t> length_histogram;
  std::array<std::uint64_t, 3> stop_counts{};  // indexed by StopReason
  double mean_span = 0.0;
};

TrajectoryStats trajectory_stats(const TrajectorySet& set);

// PCTR container (little endian):
//   "PCTR" | u16 version=1 | u16 id_len | id bytes | u32 W | u32 H | u32 T
//   | u64 seed | f32 gamma | f32 delta | u32 count
// per trajectory:
//   u32 start | u32 length | u8 stop | (f32 x, f32 y) * length
//   | u32 residual_count | (f16 a, f16 b) * residual_count
std::vector<std::uint8_t> encode_pctr(const TrajectorySet& set);
TrajectorySet decode_pctr(std::span<const std::uint8_t> bytes);

}  // namespace pico
