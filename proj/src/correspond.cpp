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

#include "pico/correspond.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <type_traits>

#include <json.hpp>

#include "pico/error.hpp"
#include "pico/rng.hpp"

namespace pico {

namespace {

static_assert(std::is_standard_layout_v<PixelPair>);
static_assert(std::is_standard_layout_v<FeaturePair>);
static_assert(sizeof(FeaturePair) == 4 * sizeof(std::int32_t));
static_assert(offsetof(PixelPair, pb) == offsetof(PixelPair, pa) + 2 * sizeof(double));

// Seeded uniform k-subset of [0, n), ascending.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::int32_t cell(double coord, std::uint32_t scale, std::size_t extent) {
  const double c = std::floor(coord / scale);
  const double hi = static_cast<double>(extent) - 1.0;
  return static_cast<std::int32_t>(std::clamp(c, 0.0, hi));
}

}  // namespace

void ViewGeometry::validate(std::uint32_t width, std::uint32_t height) const {
  if (crop_w == 0 || crop_h == 0) throw InvalidArgument("empty crop");
  if (out.width == 0 || out.height == 0) throw InvalidArgument("empty output size");
  if (static_cast<std::uint64_t>(crop_x) + crop_w > width ||
      static_cast<std::uint64_t>(crop_y) + crop_h > height) {
    throw InvalidArgument("crop extends past the " + std::to_string(width) +
                          "x" + std::to_string(height) + " source");
  }
}

bool ViewGeometry::map(Point2d src, Point2d& dst) const {
  double x = (src.x - crop_x) * (static_cast<double>(out.width) / crop_w);
  const double y = (src.y - crop_y) * (static_cast<double>(out.height) / crop_h);
  const double xmax = out.width - 1.0, ymax = out.height - 1.0;
  if (!(x >= 0.0 && x <= xmax && y >= 0.0 && y <= ymax)) return false;
  if (flip_h) x = xmax - x;
  dst = {x, y};
  return true;
}

BufferView CorrespondenceBatch::feature_index_view() const {
  BufferView v;
  v.data = feature_indices.data();
  v.shape = {feature_indices.size(), 4};
  v.strides = {static_cast<std::ptrdiff_t>(sizeof(FeaturePair)),
               static_cast<std::ptrdiff_t>(sizeof(std::int32_t))};
  v.format = 'i';
  return v;
}

BufferView CorrespondenceBatch::coordinate_view() const {
  BufferView v;
  v.data = pairs.empty() ? nullptr : &pairs.front().pa.x;
  v.shape = {pairs.size(), 4};
  v.strides = {static_cast<std::ptrdiff_t>(sizeof(PixelPair)),
               static_cast<std::ptrdiff_t>(sizeof(double))};
  v.format = 'd';
  return v;
}

std::vector<PixelPair> pairs_from_trajectories(const TrajectorySet& set,
                                               std::uint32_t frame_a,
                                               std::uint32_t frame_b) {
  if (frame_a >= set.num_frames || frame_b >= set.num_frames) {
    throw OutOfBounds("frame pair (" + std::to_string(frame_a) + ", " +
                      std::to_string(frame_b) + ") outside video of " +
                      std::to_string(set.num_frames) + " frames");
  }
  std::vector<PixelPair> out;
  for (std::size_t i = 0; i < set.trajectories.size(); ++i) {
    const Trajectory& tr = set.trajectories[i];
    if (!tr.active_on(frame_a) || !tr.active_on(frame_b)) continue;
    const Point2f a = tr.at_frame(frame_a), b = tr.at_frame(frame_b);
    out.push_back({frame_a, frame_b, {a.x, a.y}, {b.x, b.y},
                   static_cast<std::uint32_t>(i)});
  }
  return out;
}

std::vector<PixelPair> static_pairs(std::uint32_t frame_a, std::uint32_t frame_b,
                                    std::uint32_t grid_stride,
                                    std::uint32_t width, std::uint32_t height) {
  std::vector<PixelPair> out;
  for (const SeedPoint& s : seed_grid(width, height, grid_stride, frame_a)) {
    out.push_back({frame_a, frame_b, {s.x, s.y}, {s.x, s.y}, kStaticTrack});
  }
  return out;
}

std::vector<PixelPair> apply_view(const std::vector<PixelPair>& pairs,
                                  const ViewGeometry& geom_a,
                                  const ViewGeometry& geom_b) {
  std::vector<PixelPair> out;
  out.reserve(pairs.size());
  for (const PixelPair& p : pairs) {
    PixelPair m = p;
    if (geom_a.map(p.pa, m.pa) && geom_b.map(p.pb, m.pb)) out.push_back(m);
  }
  return out;
}

std::size_t feature_grid_extent(std::uint32_t pixels, std::uint32_t scale) {
  return (static_cast<std::size_t>(pixels) + scale - 1) / scale;
}

std::vector<FeaturePair> to_feature_indices(const std::vector<PixelPair>& pairs,
                                            const FeatureLayout& layout) {
  if (layout.scale == 0) throw InvalidArgument("feature scale must be >= 1");
  const std::uint32_t s = layout.scale;
  const std::size_t rows_a = feature_grid_extent(layout.view_a.height, s);
  const std::size_t cols_a = feature_grid_extent(layout.view_a.width, s);
  const std::size_t rows_b = feature_grid_extent(layout.view_b.height, s);
  const std::size_t cols_b = feature_grid_extent(layout.view_b.width, s);
  if (rows_a == 0 || cols_a == 0 || rows_b == 0 || cols_b == 0) {
    throw InvalidArgument("empty view in feature layout");
  }
  std::vector<FeaturePair> out;
  out.reserve(pairs.size());
  for (const PixelPair& p : pairs) {
    out.push_back({cell(p.pa.y, s, rows_a), cell(p.pa.x, s, cols_a),
                   cell(p.pb.y, s, rows_b), cell(p.pb.x, s, cols_b)});
  }
  return out;
}

CorrespondenceBatch assemble_batch(std::vector<VideoPairs> per_video,
                                   std::size_t budget, std::uint64_t rng_seed,
                                   const FeatureLayout& layout,
                                   BudgetMode mode) {
  if (budget == 0) throw InvalidArgument("pair budget must be >= 1");
  std::stable_sort(per_video.begin(), per_video.end(),
                   [](const VideoPairs& l, const VideoPairs& r) {
                     return l.video_id < r.video_id;
                   });
  CorrespondenceBatch batch;
  batch.budget = budget;
  batch.scale = layout.scale;

  std::size_t total = 0;
  for (const auto& v : per_video) total += v.pairs.size();

  auto keep = [&](std::size_t v, const PixelPair& p) {
    batch.pairs.push_back(p);
    batch.video_index.push_back(static_cast<std::uint32_t>(v));
  };

  for (const auto& v : per_video) batch.videos.push_back(v.video_id);
  if (total <= budget) {
    for (std::size_t v = 0; v < per_video.size(); ++v) {
      for (const auto& p : per_video[v].pairs) keep(v, p);
    }
  } else if (mode == BudgetMode::kUniform) {
    Rng rng(rng_seed);
    std::vector<std::size_t> chosen = choose(total, budget, rng);
    std::size_t v = 0, base = 0;
    for (std::size_t idx : chosen) {
      while (idx >= base + per_video[v].pairs.size()) {
        base += per_video[v].pairs.size();
        ++v;
      }
      keep(v, per_video[v].pairs[idx - base]);
    }
  } else {
    // Quota budget/V per video, the remainder going to the first videos.
    // Unused quota is not redistributed.
    const std::size_t nv = per_video.size();
    for (std::size_t v = 0; v < nv; ++v) {
      const std::size_t quota = budget / nv + (v < budget % nv ? 1 : 0);
      const auto& list = per_video[v].pairs;
      if (list.size() <= quota) {
        for (const auto& p : list) keep(v, p);
        continue;
      }
      Rng rng = Rng::stream(rng_seed, v);
      for (std::size_t idx : choose(list.size(), quota, rng)) keep(v, list[idx]);
    }
  }
  batch.feature_indices = to_feature_indices(batch.pairs, layout);
  return batch;
}

void write_pairs_jsonl(const CorrespondenceBatch& batch, std::ostream& out) {
  for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
    const PixelPair& p = batch.pairs[i];
    const FeaturePair& f = batch.feature_indices[i];
    nlohmann::ordered_json j;
    j["vid"] = batch.videos[batch.video_index[i]];
    j["fa"] = p.frame_a;
    j["fb"] = p.frame_b;
    j["pa"] = {p.pa.x, p.pa.y};
    j["pb"] = {p.pb.x, p.pb.y};
    j["ia"] = {f.row_a, f.col_a};
    j["ib"] = {f.row_b, f.col_b};
    out << j.dump() << '\n';
  }
}

}  // namespace pico
