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

#include "pico/tracker.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "pico/binio.hpp"
#include "pico/error.hpp"
#include "pico/parallel.hpp"
#include "pico/rng.hpp"

namespace pico {

namespace {

constexpr char kTrajMagic[] = "PCTR";
constexpr std::uint16_t kTrajVersion = 1;

void require_trackable(const FlowVolume& volume) {
  if (volume.num_frames() < 2) {
    throw DegenerateVideo("video needs at least 2 frames, has " +
                          std::to_string(volume.num_frames()));
  }
  if (!volume.has_backward()) {
    throw InvalidFlow("tracking needs backward flow");
  }
}

void require_frame(const FlowVolume& volume, std::uint32_t frame) {
  if (frame + 1 >= volume.num_frames()) {
    throw OutOfBounds("no flow leaves frame " + std::to_string(frame));
  }
}

// Tracks one seed. The running position is kept in double; stored points
// are rounded to float.
Trajectory grow(const FlowVolume& volume, const SeedPoint& seed,
                const ThresholdParams& params, bool store_residuals) {
  Trajectory tr;
  tr.start_frame = seed.frame;
  Point2d p{seed.x, seed.y};
  tr.points.push_back({static_cast<float>(p.x), static_cast<float>(p.y)});
  const std::uint32_t last = volume.num_frames() - 1;
  for (std::uint32_t t = seed.frame; t < last; ++t) {
    const FlowVec w = volume.forward(t).sample(p.x, p.y);
    const Point2d q{p.x + w.u, p.y + w.v};
    const FlowField& back = volume.backward(t);
    if (!back.contains(q.x, q.y)) {
      tr.stop = StopReason::kOutOfBounds;
      return tr;
    }
    const FlowVec wb = back.sample(q.x, q.y);
    const double su = w.u + wb.u, sv = w.v + wb.v;
    const double a = su * su + sv * sv;
    const double b = w.u * w.u + w.v * w.v + wb.u * wb.u + wb.v * wb.v;
    if (!params.accepts(a, b)) {
      tr.stop = StopReason::kConsistency;
      return tr;
    }
    tr.points.push_back({static_cast<float>(q.x), static_cast<float>(q.y)});
    if (store_residuals) {
      tr.residuals.push_back({Eigen::half(static_cast<float>(a)),
                              Eigen::half(static_cast<float>(b))});
    }
    p = q;
  }
  tr.stop = StopReason::kEndOfVideo;
  return tr;
}

}  // namespace

void ThresholdParams::validate() const {
  if (!std::isfinite(gamma) || gamma < 0.0f) {
    throw InvalidArgument("gamma must be finite and >= 0");
  }
  if (std::isnan(delta) || delta < 0.0f) {
    throw InvalidArgument("delta must be >= 0");
  }
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kConsistency: return "consistency";
    case StopReason::kOutOfBounds: return "out_of_bounds";
    case StopReason::kEndOfVideo: return "end_of_video";
  }
  return "unknown";
}

bool TrajectorySet::has_residuals() const {
  return std::all_of(trajectories.begin(), trajectories.end(),
                     [](const Trajectory& t) {
                       return t.residuals.size() + 1 == t.points.size();
                     });
}

std::vector<SeedPoint> seed_points(std::uint32_t num_frames, std::uint32_t width,
                                   std::uint32_t height, std::size_t count,
                                   std::uint64_t rng_seed) {
  if (num_frames < 2) {
    throw DegenerateVideo("cannot seed a video with fewer than 2 frames");
  }
  if (width == 0 || height == 0) throw DegenerateVideo("empty frame size");
  if (count == 0) throw InvalidArgument("point count must be >= 1");
  std::vector<SeedPoint> out(count);
  const double xmax = width - 1.0, ymax = height - 1.0;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::stream(rng_seed, i);
    out[i].frame = static_cast<std::uint32_t>(rng.below(num_frames - 1));
    out[i].x = rng.uniform() * xmax;
    out[i].y = rng.uniform() * ymax;
  }
  return out;
}

std::vector<SeedPoint> seed_points(const FlowVolume& volume, std::size_t count,
                                   std::uint64_t rng_seed) {
  return seed_points(volume.num_frames(), volume.width(), volume.height(),
                     count, rng_seed);
}

std::vector<SeedPoint> seed_grid(std::uint32_t width, std::uint32_t height,
                                 std::uint32_t stride, std::uint32_t frame) {
  if (stride == 0) throw InvalidArgument("grid stride must be >= 1");
  std::vector<SeedPoint> out;
  const double half = (stride - 1) / 2.0;
  for (std::uint32_t r = 0; r < height / stride; ++r) {
    for (std::uint32_t c = 0; c < width / stride; ++c) {
      out.push_back({frame, half + static_cast<double>(c) * stride,
                     half + static_cast<double>(r) * stride});
    }
  }
  return out;
}

Point2d advect(const FlowVolume& volume, std::uint32_t frame, Point2d p) {
  require_frame(volume, frame);
  const FlowVec w = volume.forward(frame).sample(p.x, p.y);
  return {p.x + w.u, p.y + w.v};
}

ConsistencyTerms consistency_residual(const FlowVolume& volume,
                                      std::uint32_t frame, Point2d p) {
  require_frame(volume, frame);
  if (!volume.has_backward()) throw InvalidFlow("volume has no backward flow");
  const FlowVec w = volume.forward(frame).sample(p.x, p.y);
  const FlowVec wb = volume.backward(frame).sample(p.x + w.u, p.y + w.v);
  const double su = w.u + wb.u, sv = w.v + wb.v;
  return {su * su + sv * sv,
          w.u * w.u + w.v * w.v + wb.u * wb.u + wb.v * wb.v};
}

TrajectorySet track(const FlowVolume& volume, std::span<const SeedPoint> seeds,
                    const ThresholdParams& params, bool store_residuals,
                    unsigned threads) {
  require_trackable(volume);
  params.validate();
  for (const auto& s : seeds) {
    if (s.frame >= volume.num_frames() ||
        !volume.forward(0).contains(s.x, s.y)) {
      throw OutOfBounds("seed (" + std::to_string(s.frame) + ", " +
                        std::to_string(s.x) + ", " + std::to_string(s.y) +
                        ") outside the video");
    }
  }
  TrajectorySet set;
  set.width = volume.width();
  set.height = volume.height();
  set.num_frames = volume.num_frames();
  set.params = params;
  set.trajectories.resize(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t i) {
    set.trajectories[i] = grow(volume, seeds[i], params, store_residuals);
  });
  return set;
}

TrajectorySet rethreshold(const TrajectorySet& set,
                          const ThresholdParams& new_params) {
  new_params.validate();
  if (!set.has_residuals()) {
    throw MissingResiduals("trajectory set was built without residuals");
  }
  if (new_params == set.params) return set;
  const ThresholdParams& old = set.params;
  if (!old.is_permissive() &&
      (new_params.gamma > old.gamma || new_params.delta > old.delta)) {
    throw PermissivenessError(
        "new thresholds are more permissive than the build thresholds; "
        "truncated tracks cannot be extended");
  }
  TrajectorySet out = set;
  out.params = new_params;
  for (auto& tr : out.trajectories) {
    for (std::size_t i = 0; i < tr.residuals.size(); ++i) {
      const double a = static_cast<float>(tr.residuals[i].a);
      const double b = static_cast<float>(tr.residuals[i].b);
      if (!new_params.accepts(a, b)) {
        tr.points.resize(i + 1);
        tr.residuals.resize(i);
        tr.stop = StopReason::kConsistency;
        break;
      }
    }
  }
  return out;
}

TrajectoryStats trajectory_stats(const TrajectorySet& set) {
  TrajectoryStats st;
  st.count = set.trajectories.size();
  st.length_histogram.assign(static_cast<std::size_t>(set.num_frames) + 1, 0);
  double total = 0.0;
  for (const auto& tr : set.trajectories) {
    const std::size_t len = tr.points.size();
    if (len >= st.length_histogram.size()) st.length_histogram.resize(len + 1, 0);
    ++st.length_histogram[len];
    ++st.stop_counts[static_cast<std::size_t>(tr.stop)];
    total += static_cast<double>(len);
  }
  st.mean_span = st.count == 0 ? 0.0 : total / static_cast<double>(st.count);
  return st;
}

std::vector<std::uint8_t> encode_pctr(const TrajectorySet& set) {
  if (set.video_id.size() > 0xFFFF) throw InvalidArgument("video id too long");
  binio::Writer w;
  w.tag(kTrajMagic);
  w.u16(kTrajVersion);
  w.u16(static_cast<std::uint16_t>(set.video_id.size()));
  w.bytes({reinterpret_cast<const std::uint8_t*>(set.video_id.data()),
           set.video_id.size()});
  w.u32(set.width);
  w.u32(set.height);
  w.u32(set.num_frames);
  w.u64(set.seed);
  w.f32(set.params.gamma);
  w.f32(set.params.delta);
  w.u32(static_cast<std::uint32_t>(set.trajectories.size()));
  for (const auto& tr : set.trajectories) {
    w.u32(tr.start_frame);
    w.u32(tr.length());
    w.u8(static_cast<std::uint8_t>(tr.stop));
    for (const auto& p : tr.points) {
      w.f32(p.x);
      w.f32(p.y);
    }
    w.u32(static_cast<std::uint32_t>(tr.residuals.size()));
    for (const auto& r : tr.residuals) {
      w.u16(std::bit_cast<std::uint16_t>(r.a));
      w.u16(std::bit_cast<std::uint16_t>(r.b));
    }
  }
  return w.take();
}

TrajectorySet decode_pctr(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  r.expect_tag(kTrajMagic);
  std::size_t at = r.offset();
  if (const auto version = r.u16(); version != kTrajVersion) {
    throw FormatError(at, "unsupported PCTR version " + std::to_string(version));
  }
  TrajectorySet set;
  const std::uint16_t id_len = r.u16();
  const auto id = r.bytes(id_len);
  set.video_id.assign(id.begin(), id.end());
  set.width = r.u32();
  set.height = r.u32();
  set.num_frames = r.u32();
  set.seed = r.u64();
  at = r.offset();
  set.params.gamma = r.f32();
  set.params.delta = r.f32();
  try {
    set.params.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(at, e.what());
  }
  const std::uint32_t count = r.u32();
  // Each trajectory needs at least 17 bytes.
  if (count > r.remaining() / 17) throw FormatError(r.offset(), "truncated input");
  set.trajectories.resize(count);
  const double xmax = set.width - 1.0, ymax = set.height - 1.0;
  for (auto& tr : set.trajectories) {
    at = r.offset();
    tr.start_frame = r.u32();
    const std::uint32_t length = r.u32();
    if (length == 0 ||
        static_cast<std::uint64_t>(tr.start_frame) + length > set.num_frames) {
      throw FormatError(at, "trajectory span outside the video");
    }
    at = r.offset();
    const std::uint8_t stop = r.u8();
    if (stop > static_cast<std::uint8_t>(StopReason::kEndOfVideo)) {
      throw FormatError(at, "unknown stop reason " + std::to_string(stop));
    }
    tr.stop = static_cast<StopReason>(stop);
    if (length > r.remaining() / 8) throw FormatError(r.offset(), "truncated input");
    tr.points.resize(length);
    for (auto& p : tr.points) {
      at = r.offset();
      p.x = r.f32();
      p.y = r.f32();
      if (!(p.x >= 0.0f && p.x <= xmax && p.y >= 0.0f && p.y <= ymax)) {
        throw FormatError(at, "trajectory point outside the frame");
      }
    }
    at = r.offset();
    const std::uint32_t nres = r.u32();
    if (nres != 0 && nres + 1 != length) {
      throw FormatError(at, "residual count must be 0 or length - 1");
    }
    tr.residuals.resize(nres);
    for (auto& res : tr.residuals) {
      res.a = std::bit_cast<Eigen::half>(r.u16());
      res.b = std::bit_cast<Eigen::half>(r.u16());
    }
  }
  r.expect_end();
  return set;
}

}  // namespace pico
