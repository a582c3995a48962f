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

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "pico/correspond.hpp"
#include "pico/error.hpp"
#include "test_util.hpp"

using namespace pico;
using pico::testing::constant_volume;
using pico::testing::volume_from;

namespace {

PixelPair pair_at(double xa, double ya, double xb, double yb) {
  return {0, 1, {xa, ya}, {xb, yb}, 0};
}

ViewGeometry random_view(Rng& rng, std::uint32_t w, std::uint32_t h) {
  ViewGeometry g;
  g.crop_w = static_cast<std::uint32_t>(1 + rng.below(w));
  g.crop_h = static_cast<std::uint32_t>(1 + rng.below(h));
  g.crop_x = static_cast<std::uint32_t>(rng.below(w - g.crop_w + 1));
  g.crop_y = static_cast<std::uint32_t>(rng.below(h - g.crop_h + 1));
  g.flip_h = rng.below(2) == 1;
  g.out = {static_cast<std::uint32_t>(1 + rng.below(64)),
           static_cast<std::uint32_t>(1 + rng.below(64))};
  return g;
}

// Source-space containment: the output lattice hull [0, W'-1] pulled back
// through the crop scale.
bool in_crop(const ViewGeometry& g, Point2d p) {
  const double xr = g.crop_x + (g.out.width - 1.0) * g.crop_w / g.out.width;
  const double yr = g.crop_y + (g.out.height - 1.0) * g.crop_h / g.out.height;
  return p.x >= g.crop_x && p.x <= xr && p.y >= g.crop_y && p.y <= yr;
}

}  // namespace

TEST_CASE("pairs from tracked trajectories") {
  SUBCASE("static scene") {
    const FlowVolume v = constant_volume(6, 32, 32, {}, {});
    const TrajectorySet set = track(v, seed_points(v, 200, 4), {}, true);
    const auto pairs = pairs_from_trajectories(set, 1, 5);
    CHECK(!pairs.empty());
    for (const auto& p : pairs) {
      CHECK(p.pa.x == p.pb.x);
      CHECK(p.pa.y == p.pb.y);
      CHECK(set.trajectories[p.track_id].active_on(1));
    }
  }
  SUBCASE("constant flow") {
    const FlowVolume v = constant_volume(6, 64, 32, {2, 0}, {-2, 0});
    std::vector<SeedPoint> seeds;
    for (int i = 0; i < 20; ++i) seeds.push_back({0, 1.0 + i, 3.0 + i * 0.5});
    const TrajectorySet set = track(v, seeds, {}, true);
    const auto pairs = pairs_from_trajectories(set, 0, 3);
    CHECK(pairs.size() == 20);
    for (const auto& p : pairs) {
      CHECK(p.pb.x == doctest::Approx(p.pa.x + 6.0).epsilon(1e-6));
      CHECK(p.pb.y == p.pa.y);
    }
  }
  SUBCASE("rigid rotation") {
    const double c = 31.5, th = std::numbers::pi / 180.0;
    auto rot = [c](double ang, double x, double y) {
      const double dx = x - c, dy = y - c;
      return FlowVec{std::cos(ang) * dx - std::sin(ang) * dy - dx,
                     std::sin(ang) * dx + std::cos(ang) * dy - dy};
    };
    const FlowVolume v = volume_from(
        11, 64, 64, [&](std::uint32_t, double x, double y) { return rot(th, x, y); },
        [&](std::uint32_t, double x, double y) { return rot(-th, x, y); });
    std::vector<SeedPoint> seeds;
    for (int i = 0; i < 30; ++i) seeds.push_back({0, 20.0 + i * 0.7, 25.0 + i * 0.3});
    const TrajectorySet set = track(v, seeds, {}, true);
    const auto pairs = pairs_from_trajectories(set, 0, 10);
    CHECK(pairs.size() == 30);
    for (const auto& p : pairs) {
      const FlowVec d = rot(10 * th, p.pa.x, p.pa.y);
      CHECK(std::hypot(p.pb.x - (p.pa.x + d.u), p.pb.y - (p.pa.y + d.v)) < 0.05);
    }
  }
  SUBCASE("frames outside the video") {
    const FlowVolume v = constant_volume(3, 8, 8, {}, {});
    const TrajectorySet set = track(v, seed_points(v, 5, 1), {}, true);
    CHECK_THROWS_AS(pairs_from_trajectories(set, 0, 3), OutOfBounds);
  }
}

TEST_CASE("static pairs") {
  const auto one = static_pairs(2, 5, 32, 32, 32);
  REQUIRE(one.size() == 1);
  CHECK(one[0].pa.x == 15.5);
  CHECK(one[0].pa.y == 15.5);
  CHECK(one[0].pb.x == 15.5);
  CHECK(one[0].track_id == kStaticTrack);
  const auto grid = static_pairs(0, 0, 4, 32, 32);
  CHECK(grid.size() == 64);
  for (const auto& p : grid) {
    CHECK(p.frame_a == p.frame_b);
    CHECK(p.pa.x == p.pb.x);
  }
  CHECK(grid[1].pa.x - grid[0].pa.x == 4.0);
}

TEST_CASE("view mapping") {
  const std::vector<PixelPair> pairs = {pair_at(12, 12, 3, 4), pair_at(0, 0, 31, 31)};
  SUBCASE("identity") {
    const ViewGeometry id = ViewGeometry::identity(32, 32);
    const auto out = apply_view(pairs, id, id);
    REQUIRE(out.size() == 2);
    CHECK(out[0].pa.x == 12.0);
    CHECK(out[1].pb.y == 31.0);
  }
  SUBCASE("flip") {
    ViewGeometry flip = ViewGeometry::identity(32, 32);
    flip.flip_h = true;
    const auto out = apply_view(pairs, flip, ViewGeometry::identity(32, 32));
    CHECK(out[0].pa.x == 31.0 - 12.0);
    CHECK(out[0].pa.y == 12.0);
    CHECK(out[0].pb.x == 3.0);
  }
  SUBCASE("crop and resize") {
    const ViewGeometry crop{8, 8, 16, 16, false, {32, 32}};
    const auto out = apply_view(pairs, crop, ViewGeometry::identity(32, 32));
    REQUIRE(out.size() == 1);  // (0, 0) is outside the crop
    CHECK(out[0].pa.x == 8.0);
    CHECK(out[0].pa.y == 8.0);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS((ViewGeometry{8, 8, 30, 16, false, {32, 32}}.validate(32, 32)),
                    InvalidArgument);
    CHECK_THROWS_AS((ViewGeometry{0, 0, 0, 16, false, {32, 32}}.validate(32, 32)),
                    InvalidArgument);
  }
}

TEST_CASE("a pair survives iff both endpoints are inside their crops") {
  Rng rng(606);
  for (int trial = 0; trial < 300; ++trial) {
    const ViewGeometry ga = random_view(rng, 48, 40), gb = random_view(rng, 48, 40);
    std::vector<PixelPair> pairs;
    for (int i = 0; i < 50; ++i) {
      pairs.push_back(pair_at(rng.uniform() * 47, rng.uniform() * 39,
                              rng.uniform() * 47, rng.uniform() * 39));
    }
    // Lattice points, which sit exactly on crop edges.
    pairs.push_back(pair_at(ga.crop_x, ga.crop_y, gb.crop_x, gb.crop_y));
    std::vector<PixelPair> expect;
    for (const auto& p : pairs) {
      if (in_crop(ga, p.pa) && in_crop(gb, p.pb)) expect.push_back(p);
    }
    const auto out = apply_view(pairs, ga, gb);
    REQUIRE(out.size() == expect.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].pa.x >= 0.0);
      CHECK(out[i].pa.x <= ga.out.width - 1.0);
      CHECK(out[i].pb.y <= gb.out.height - 1.0);
    }
  }
}

TEST_CASE("feature indices") {
  const FeatureLayout layout{4, {32, 24}, {32, 24}};
  auto cells = to_feature_indices({pair_at(10.0, 7.0, 0, 0), pair_at(31, 23, 31.999, 23.5)}, layout);
  CHECK(cells[0] == FeaturePair{1, 2, 0, 0});
  CHECK(cells[1] == FeaturePair{5, 7, 5, 7});
  CHECK(feature_grid_extent(30, 4) == 8);
  CHECK_THROWS_AS(to_feature_indices({}, {0, {4, 4}, {4, 4}}), InvalidArgument);

  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const ViewGeometry ga = random_view(rng, 64, 64), gb = random_view(rng, 64, 64);
    const auto scale = static_cast<std::uint32_t>(1 + rng.below(8));
    std::vector<PixelPair> pairs;
    for (int i = 0; i < 40; ++i) {
      pairs.push_back(pair_at(rng.uniform() * 63, rng.uniform() * 63,
                              rng.uniform() * 63, rng.uniform() * 63));
    }
    const auto mapped = apply_view(pairs, ga, gb);
    const FeatureLayout l{scale, ga.out, gb.out};
    for (const auto& f : to_feature_indices(mapped, l)) {
      CHECK(f.row_a >= 0);
      CHECK(f.col_a >= 0);
      CHECK(static_cast<std::size_t>(f.row_a) < feature_grid_extent(ga.out.height, scale));
      CHECK(static_cast<std::size_t>(f.col_a) < feature_grid_extent(ga.out.width, scale));
      CHECK(static_cast<std::size_t>(f.row_b) < feature_grid_extent(gb.out.height, scale));
      CHECK(static_cast<std::size_t>(f.col_b) < feature_grid_extent(gb.out.width, scale));
    }
  }
}

TEST_CASE("zero flow composed with views equals the static map") {
  const FlowVolume v = constant_volume(5, 40, 40, {}, {});
  const auto seeds = seed_grid(40, 40, 4, 0);
  const TrajectorySet set = track(v, seeds, {}, true);
  const ViewGeometry g{6, 4, 24, 30, true, {48, 60}};
  const auto tracked = apply_view(pairs_from_trajectories(set, 0, 4), g, g);
  const auto fixed = apply_view(static_pairs(0, 4, 4, 40, 40), g, g);
  REQUIRE(tracked.size() == fixed.size());
  CHECK(!tracked.empty());
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    CHECK(tracked[i].pa.x == fixed[i].pa.x);
    CHECK(tracked[i].pa.y == fixed[i].pa.y);
    CHECK(tracked[i].pb.x == fixed[i].pb.x);
    CHECK(tracked[i].pb.y == fixed[i].pb.y);
    CHECK(tracked[i].pa.x == tracked[i].pb.x);
  }
}

TEST_CASE("batch assembly") {
  const FeatureLayout layout{4, {64, 64}, {64, 64}};
  auto lists = [](std::size_t videos, std::size_t per) {
    std::vector<VideoPairs> out;
    for (std::size_t v = 0; v < videos; ++v) {
      VideoPairs vp;
      vp.video_id = "vid" + std::to_string(1000 + (videos - v));  // reverse order
      for (std::size_t i = 0; i < per; ++i) {
        vp.pairs.push_back({0, 1, {double(i % 64), double(v % 64)}, {0, 0},
                            static_cast<std::uint32_t>(i)});
      }
      out.push_back(std::move(vp));
    }
    return out;
  };
  SUBCASE("budget cap") {
    const auto b = assemble_batch(lists(256, 300), 65536, 1, layout);
    CHECK(b.size() == 65536);
    CHECK(b.feature_indices.size() == 65536);
    CHECK(b.videos.size() == 256);
    CHECK(std::is_sorted(b.videos.begin(), b.videos.end()));
    CHECK(std::is_sorted(b.video_index.begin(), b.video_index.end()));
    const auto again = assemble_batch(lists(256, 300), 65536, 1, layout);
    CHECK(again.video_index == b.video_index);
    CHECK(again.feature_indices == b.feature_indices);
    const auto other = assemble_batch(lists(256, 300), 65536, 2, layout);
    CHECK(other.video_index != b.video_index);
  }
  SUBCASE("under budget keeps everything in id order") {
    const auto b = assemble_batch(lists(4, 25), 65536, 1, layout);
    CHECK(b.size() == 100);
    CHECK(b.videos.front() == "vid1001");
    CHECK(b.pairs[0].pa.y == 3.0);  // video 3 of the input sorts first
  }
  SUBCASE("per-video quotas") {
    const auto b = assemble_batch(lists(3, 50), 10, 1, layout, BudgetMode::kPerVideoQuota);
    CHECK(b.size() == 10);
    std::vector<int> per(3, 0);
    for (auto v : b.video_index) ++per[v];
    CHECK(per == std::vector<int>{4, 3, 3});
  }
  SUBCASE("retention is uniform") {
    const std::size_t total = 200, budget = 50, runs = 4000;
    std::vector<double> kept(total, 0.0);
    for (std::size_t s = 0; s < runs; ++s) {
      const auto b = assemble_batch(lists(4, 50), budget, s, layout);
      for (std::size_t i = 0; i < b.size(); ++i) {
        kept[b.video_index[i] * 50 + b.pairs[i].track_id] += 1;
      }
    }
    const double p = double(budget) / total;
    const double sigma = std::sqrt(runs * p * (1 - p));
    for (double k : kept) CHECK(std::abs(k - runs * p) < 5 * sigma);
  }
  SUBCASE("budget must be positive") {
    CHECK_THROWS_AS(assemble_batch(lists(1, 1), 0, 1, layout), InvalidArgument);
  }
}

TEST_CASE("batch buffers and JSON lines") {
  std::vector<VideoPairs> lists(1);
  lists[0].video_id = "a";
  lists[0].pairs = {{2, 7, {10.0, 7.0}, {1.5, 2.5}, 0}, {2, 7, {0, 0}, {63, 63}, 1}};
  const auto b = assemble_batch(lists, 8, 0, {4, {64, 64}, {64, 64}});
  const BufferView fi = b.feature_index_view();
  CHECK(fi.data == static_cast<const void*>(b.feature_indices.data()));
  CHECK(fi.shape == std::vector<std::size_t>{2, 4});
  CHECK(fi.format == 'i');
  CHECK(static_cast<const std::int32_t*>(fi.data)[4 + 2] == 15);
  const BufferView co = b.coordinate_view();
  CHECK(co.data == static_cast<const void*>(&b.pairs[0].pa.x));
  const auto* base = static_cast<const char*>(co.data);
  CHECK(*reinterpret_cast<const double*>(base + co.strides[0] + 3 * co.strides[1]) == 63.0);

  std::ostringstream out;
  write_pairs_jsonl(b, out);
  CHECK(out.str() ==
        "{\"vid\":\"a\",\"fa\":2,\"fb\":7,\"pa\":[10.0,7.0],\"pb\":[1.5,2.5],\"ia\":[1,2],\"ib\":[0,0]}\n"
        "{\"vid\":\"a\",\"fa\":2,\"fb\":7,\"pa\":[0.0,0.0],\"pb\":[63.0,63.0],\"ia\":[0,0],\"ib\":[15,15]}\n");
}
