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

#include "pico/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "pico/error.hpp"

namespace pico {

namespace {

constexpr double kEdgeGuard = 1e-3;

enum class Coverage { kInside, kOutside, kMixed };

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

FlowVec rotate_offset(Point2d c, double angle, double x, double y) {
  const double dx = x - c.x, dy = y - c.y;
  const double cs = std::cos(angle), sn = std::sin(angle);
  return {cs * dx - sn * dy - dx, sn * dx + cs * dy - dy};
}

Region occluder_at(const SceneSpec& s, double frame) {
  return s.occluder.shifted(frame * s.occluder_velocity.u,
                            frame * s.occluder_velocity.v);
}

// Motion of the smooth scene kinds; regions are handled by the callers.
FlowVec smooth_forward(const SceneSpec& s, double x, double y) {
  switch (s.kind) {
    case MotionKind::kZero: return {};
    case MotionKind::kConstant: return s.velocity;
    case MotionKind::kRotation:
      return rotate_offset(s.center, radians(s.degrees_per_frame), x, y);
    case MotionKind::kZoom:
      return {(s.scale_per_frame - 1.0) * (x - s.center.x),
              (s.scale_per_frame - 1.0) * (y - s.center.y)};
    case MotionKind::kOccluder: return s.velocity;
  }
  return {};
}

FlowVec smooth_backward(const SceneSpec& s, double x, double y) {
  switch (s.kind) {
    case MotionKind::kZero: return {};
    case MotionKind::kConstant: return {-s.velocity.u, -s.velocity.v};
    case MotionKind::kRotation:
      return rotate_offset(s.center, -radians(s.degrees_per_frame), x, y);
    case MotionKind::kZoom:
      return {(1.0 / s.scale_per_frame - 1.0) * (x - s.center.x),
              (1.0 / s.scale_per_frame - 1.0) * (y - s.center.y)};
    case MotionKind::kOccluder: return {-s.velocity.u, -s.velocity.v};
  }
  return {};
}

// Exact field values at lattice points.
FlowVec lattice_forward(const SceneSpec& s, std::uint32_t t, double x, double y) {
  if (s.kind == MotionKind::kOccluder && occluder_at(s, t).contains(x, y)) {
    return s.occluder_velocity;
  }
  return smooth_forward(s, x, y);
}

FlowVec lattice_backward(const SceneSpec& s, std::uint32_t t, double x, double y) {
  if (s.backward == BackwardMode::kCorrupted && s.corrupt_region.contains(x, y)) {
    return s.corrupt_vector;
  }
  if (s.kind == MotionKind::kOccluder && occluder_at(s, t + 1.0).contains(x, y)) {
    return {-s.occluder_velocity.u, -s.occluder_velocity.v};
  }
  return smooth_backward(s, x, y);
}

// Whether every lattice point that can carry bilinear weight for a lookup
// near (x, y) lies inside the region.
Coverage coverage(const SceneSpec& s, const Region& r, double x, double y) {
  const double xmax = s.width - 1.0, ymax = s.height - 1.0;
  const double x0 = std::clamp(std::floor(x - kEdgeGuard), 0.0, xmax);
  const double x1 = std::clamp(std::ceil(x + kEdgeGuard), 0.0, xmax);
  const double y0 = std::clamp(std::floor(y - kEdgeGuard), 0.0, ymax);
  const double y1 = std::clamp(std::ceil(y + kEdgeGuard), 0.0, ymax);
  int in = 0, total = 0;
  for (double cy = y0; cy <= y1; cy += 1.0) {
    for (double cx = x0; cx <= x1; cx += 1.0) {
      in += r.contains(cx, cy) ? 1 : 0;
      ++total;
    }
  }
  if (in == 0) return Coverage::kOutside;
  return in == total ? Coverage::kInside : Coverage::kMixed;
}

bool near_edge(const SceneSpec& s, double x, double y) {
  const double xmax = s.width - 1.0, ymax = s.height - 1.0;
  return std::abs(x) < kEdgeGuard || std::abs(y) < kEdgeGuard ||
         std::abs(x - xmax) < kEdgeGuard || std::abs(y - ymax) < kEdgeGuard;
}

bool inside_frame(const SceneSpec& s, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= s.width - 1.0 && y <= s.height - 1.0;
}

FlowVec read_vec(const nlohmann::json& j, const char* key, FlowVec fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) {
    throw InvalidArgument(std::string("\"") + key + "\" must be [x, y]");
  }
  return {a[0].get<double>(), a[1].get<double>()};
}

Region read_region(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 4) {
    throw InvalidArgument(std::string("\"") + key + "\" must be [x, y, w, h]");
  }
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>(),
          a[3].get<double>()};
}

}  // namespace

void SceneSpec::validate() const {
  if (frames < 2) throw InvalidArgument("scene needs at least 2 frames");
  if (width == 0 || height == 0) throw InvalidArgument("scene size must be non-empty");
  const double values[] = {velocity.u, velocity.v, center.x, center.y,
                           degrees_per_frame, scale_per_frame, occluder.x,
                           occluder.y, occluder.w, occluder.h,
                           occluder_velocity.u, occluder_velocity.v,
                           corrupt_region.x, corrupt_region.y, corrupt_region.w,
                           corrupt_region.h, corrupt_vector.u, corrupt_vector.v};
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("scene parameters must be finite");
  }
  if (kind == MotionKind::kZoom && !(scale_per_frame > 0.0)) {
    throw InvalidArgument("zoom factor must be positive");
  }
}

SceneSpec scene_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scene is not valid JSON: ") + e.what());
  }
  SceneSpec s;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "zero") s.kind = MotionKind::kZero;
    else if (kind == "constant") s.kind = MotionKind::kConstant;
    else if (kind == "rotation") s.kind = MotionKind::kRotation;
    else if (kind == "zoom") s.kind = MotionKind::kZoom;
    else if (kind == "occluder") s.kind = MotionKind::kOccluder;
    else throw InvalidArgument("unknown scene kind \"" + kind + "\"");

    const auto& size = j.at("size");
    s.width = size.at(0).get<std::uint32_t>();
    s.height = size.at(1).get<std::uint32_t>();
    s.frames = j.at("frames").get<std::uint32_t>();
    const FlowVec c = read_vec(j, "center", {(s.width - 1.0) / 2.0, (s.height - 1.0) / 2.0});
    s.center = {c.u, c.v};
    s.velocity = read_vec(j, s.kind == MotionKind::kOccluder ? "background" : "velocity", {});
    s.degrees_per_frame = j.value("degrees_per_frame", 0.0);
    s.scale_per_frame = j.value("scale_per_frame", 1.0);
    if (s.kind == MotionKind::kOccluder) {
      s.occluder = read_region(j, "rect");
      s.occluder_velocity = read_vec(j, "velocity", {});
    }
    if (j.contains("backward")) {
      const auto& b = j.at("backward");
      const std::string mode = b.at("mode").get<std::string>();
      if (mode == "exact_inverse") {
        s.backward = BackwardMode::kExactInverse;
      } else if (mode == "corrupted") {
        s.backward = BackwardMode::kCorrupted;
        s.corrupt_region = read_region(b, "region");
        s.corrupt_vector = read_vec(b, "vector", {});
      } else {
        throw InvalidArgument("unknown backward mode \"" + mode + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad scene document: ") + e.what());
  }
  s.validate();
  return s;
}

FlowVolume generate(const SceneSpec& spec) {
  spec.validate();
  const std::uint32_t w = spec.width, h = spec.height;
  std::vector<FlowField> fwd, bwd;
  fwd.reserve(spec.frames - 1);
  bwd.reserve(spec.frames - 1);
  for (std::uint32_t t = 0; t + 1 < spec.frames; ++t) {
    FlowField f(w, h, FlowDirection::kForward);
    FlowField b(w, h, FlowDirection::kBackward);
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) {
        const FlowVec fv = lattice_forward(spec, t, x, y);
        const FlowVec bv = lattice_backward(spec, t, x, y);
        f.set(x, y, static_cast<float>(fv.u), static_cast<float>(fv.v));
        b.set(x, y, static_cast<float>(bv.u), static_cast<float>(bv.v));
      }
    }
    fwd.push_back(std::move(f));
    bwd.push_back(std::move(b));
  }
  return FlowVolume(spec.frames, w, h, std::move(fwd), std::move(bwd));
}

std::vector<Point2d> ground_truth_track(const SceneSpec& spec,
                                        const SeedPoint& seed,
                                        std::uint32_t steps) {
  std::vector<Point2d> out;
  out.reserve(steps + 1);
  const Point2d p0{seed.x, seed.y};
  Point2d p = p0;
  for (std::uint32_t k = 0; k <= steps; ++k) {
    switch (spec.kind) {
      case MotionKind::kZero:
        out.push_back(p0);
        break;
      case MotionKind::kConstant:
        out.push_back({p0.x + k * spec.velocity.u, p0.y + k * spec.velocity.v});
        break;
      case MotionKind::kRotation: {
        const FlowVec d = rotate_offset(spec.center, k * radians(spec.degrees_per_frame), p0.x, p0.y);
        out.push_back({p0.x + d.u, p0.y + d.v});
        break;
      }
      case MotionKind::kZoom: {
        const double g = std::pow(spec.scale_per_frame, k);
        out.push_back({spec.center.x + g * (p0.x - spec.center.x),
                       spec.center.y + g * (p0.y - spec.center.y)});
        break;
      }
      case MotionKind::kOccluder: {
        // Piecewise translation: each step moves with the layer under it.
        out.push_back(p);
        const FlowVec v = occluder_at(spec, seed.frame + k).contains(p.x, p.y)
                              ? spec.occluder_velocity
                              : spec.velocity;
        p = {p.x + v.u, p.y + v.v};
        break;
      }
    }
  }
  return out;
}

ExpectedStop expected_stop(const SceneSpec& spec, const SeedPoint& seed,
                           const ThresholdParams& params, double guard) {
  const std::uint32_t last = spec.frames - 1;
  const std::uint32_t steps = seed.frame < last ? last - seed.frame : 0;
  const std::vector<Point2d> path = ground_truth_track(spec, seed, steps);
  ExpectedStop out;

  // Field value at a point, or false when the bilinear support is mixed.
  auto forward = [&](std::uint32_t t, Point2d p, FlowVec& w) {
    w = smooth_forward(spec, p.x, p.y);
    if (spec.kind != MotionKind::kOccluder) return true;
    switch (coverage(spec, occluder_at(spec, t), p.x, p.y)) {
      case Coverage::kInside: w = spec.occluder_velocity; return true;
      case Coverage::kOutside: return true;
      case Coverage::kMixed: return false;
    }
    return false;
  };
  auto backward = [&](std::uint32_t t, Point2d q, FlowVec& w) {
    w = smooth_backward(spec, q.x, q.y);
    if (spec.kind == MotionKind::kOccluder) {
      switch (coverage(spec, occluder_at(spec, t + 1.0), q.x, q.y)) {
        case Coverage::kInside:
          w = {-spec.occluder_velocity.u, -spec.occluder_velocity.v};
          break;
        case Coverage::kOutside: break;
        case Coverage::kMixed: return false;
      }
    }
    if (spec.backward == BackwardMode::kCorrupted) {
      switch (coverage(spec, spec.corrupt_region, q.x, q.y)) {
        case Coverage::kInside: w = spec.corrupt_vector; break;
        case Coverage::kOutside: break;
        case Coverage::kMixed: return false;
      }
    }
    return true;
  };

  for (std::uint32_t k = 0; k < steps; ++k) {
    const std::uint32_t t = seed.frame + k;
    const Point2d p = path[k], q = path[k + 1];
    out.end_frame = t;
    FlowVec w, wb;
    if (!forward(t, p, w)) {
      out.ambiguous = true;
      return out;
    }
    // For the occluder scene the path already follows the sampled layer.
    if (near_edge(spec, q.x, q.y)) out.ambiguous = true;
    if (!inside_frame(spec, q.x, q.y)) {
      out.reason = StopReason::kOutOfBounds;
      return out;
    }
    if (!backward(t, q, wb)) {
      out.ambiguous = true;
      return out;
    }
    const double su = w.u + wb.u, sv = w.v + wb.v;
    const double a = su * su + sv * sv;
    const double b = w.u * w.u + w.v * w.v + wb.u * wb.u + wb.v * wb.v;
    const double margin = static_cast<double>(params.gamma) * b +
                          static_cast<double>(params.delta) - a;
    if (std::abs(margin) < guard) out.ambiguous = true;
    if (!(margin > 0.0)) {
      out.reason = StopReason::kConsistency;
      return out;
    }
  }
  out.end_frame = std::max(seed.frame, last);
  out.reason = StopReason::kEndOfVideo;
  return out;
}

}  // namespace pico
