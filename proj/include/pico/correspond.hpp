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

#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "pico/tracker.hpp"

namespace pico {

struct Size2 {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  friend bool operator==(const Size2&, const Size2&) = default;
};

// Crop, resize and optional horizontal flip applied to one view. Only
// coordinates pass through here; resizing is a pure scale by out/crop.
struct ViewGeometry {
  std::uint32_t crop_x = 0;
  std::uint32_t crop_y = 0;
  std::uint32_t crop_w = 1;
  std::uint32_t crop_h = 1;
  bool flip_h = false;
  Size2 out;

  static ViewGeometry identity(std::uint32_t width, std::uint32_t height) {
    return {0, 0, width, height, false, {width, height}};
  }

  // Throws InvalidArgument unless the crop is non-empty and inside a
  // width x height source and the output size is non-empty.
  void validate(std::uint32_t width, std::uint32_t height) const;

  // Maps a source point into output space. Returns false when the result
  // falls outside [0, W'-1] x [0, H'-1], i.e. the point is not in the crop.
  bool map(Point2d src, Point2d& dst) const;

  friend bool operator==(const ViewGeometry&, const ViewGeometry&) = default;
};

inline constexpr std::uint32_t kStaticTrack =
    std::numeric_limits<std::uint32_t>::max();

struct PixelPair {
  std::uint32_t frame_a = 0;
  std::uint32_t frame_b = 0;
  Point2d pa;
  Point2d pb;
  std::uint32_t track_id = kStaticTrack;  // provenance
};

struct FeaturePair {
  std::int32_t row_a = 0;
  std::int32_t col_a = 0;
  std::int32_t row_b = 0;
  std::int32_t col_b = 0;
  friend bool operator==(const FeaturePair&, const FeaturePair&) = default;
};

struct FeatureLayout {
  std::uint32_t scale = 4;
  Size2 view_a;
  Size2 view_b;
};

enum class BudgetMode { kUniform, kPerVideoQuota };

struct VideoPairs {
  std::string video_id;
  std::vector<PixelPair> pairs;
};

// Strided, read-only description of a numeric array owned elsewhere (shape,
// byte strides, struct-module format character). Mirrors the buffer
// protocol so callers can wrap it without copying.
struct BufferView {
  const void* data = nullptr;
  std::vector<std::size_t> shape;
  std::vector<std::ptrdiff_t> strides;
  char format = 'b';
};

struct CorrespondenceBatch {
  std::vector<std::string> videos;          // merge order
  std::vector<PixelPair> pairs;
  std::vector<std::uint32_t> video_index;   // per pair, into videos
  std::vector<FeaturePair> feature_indices; // per pair
  std::size_t budget = 65536;
  std::uint32_t scale = 4;

  std::size_t size() const { return pairs.size(); }
  // (N, 4) int32: row_a, col_a, row_b, col_b.
  BufferView feature_index_view() const;
  // (N, 4) float64: xa, ya, xb, yb, strided over PixelPair records.
  BufferView coordinate_view() const;
};

// One pair per trajectory alive on both frames, at its stored positions.
// Throws OutOfBounds if either frame is outside the video.
std::vector<PixelPair> pairs_from_trajectories(const TrajectorySet& set,
                                               std::uint32_t frame_a,
                                               std::uint32_t frame_b);

// Identity correspondence on the stride grid used by seed_grid(). With
// frame_a == frame_b this is the single-frame baseline.
std::vector<PixelPair> static_pairs(std::uint32_t frame_a, std::uint32_t frame_b,
                                    std::uint32_t grid_stride,
                                    std::uint32_t width, std::uint32_t height);

// Maps each endpoint through its own view; a pair survives only if both
// endpoints land inside their view.
std::vector<PixelPair> apply_view(const std::vector<PixelPair>& pairs,
                                  const ViewGeometry& geom_a,
                                  const ViewGeometry& geom_b);

std::size_t feature_grid_extent(std::uint32_t pixels, std::uint32_t scale);

// (row, col) = (floor(y / scale), floor(x / scale)) clamped to the
// ceil(H'/scale) x ceil(W'/scale) grid of each view.
std::vector<FeaturePair> to_feature_indices(const std::vector<PixelPair>& pairs,
                                            const FeatureLayout& layout);

// Merges the per-video lists in video-id order and, when they hold more
// than `budget` pairs, keeps a seeded uniform subset (or per-video quotas)
// in merge order.
CorrespondenceBatch assemble_batch(std::vector<VideoPairs> per_video,
                                   std::size_t budget, std::uint64_t rng_seed,
                                   const FeatureLayout& layout,
                                   BudgetMode mode = BudgetMode::kUniform);

// One JSON object per line:
// {"vid":..,"fa":..,"fb":..,"pa":[x,y],"pb":[x,y],"ia":[r,c],"ib":[r,c]}
void write_pairs_jsonl(const CorrespondenceBatch& batch, std::ostream& out);

}  // namespace pico
