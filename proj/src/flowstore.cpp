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

#include "pico/flowstore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pico/binio.hpp"
#include "pico/error.hpp"

namespace pico {

namespace {

std::size_t cells(std::uint32_t w, std::uint32_t h) {
  return static_cast<std::size_t>(w) * h;
}

std::uint8_t encode_one(float x, float lo, float hi) {
  if (!(hi > lo)) return 0;
  const double scaled = 255.0 * (static_cast<double>(x) - lo) /
                        (static_cast<double>(hi) - lo);
  // std::round rounds halfway cases away from zero.
  return static_cast<std::uint8_t>(std::clamp(std::round(scaled), 0.0, 255.0));
}

float decode_one(std::uint8_t code, float lo, float hi) {
  const double span = static_cast<double>(hi) - lo;
  return static_cast<float>(lo + (code * span) / 255.0);
}

void channel_range(std::span<const float> plane, float& lo, float& hi) {
  if (plane.empty()) {
    lo = hi = 0.0f;
    return;
  }
  auto [mn, mx] = std::minmax_element(plane.begin(), plane.end());
  lo = *mn;
  hi = *mx;
}

ChannelRange range_of(const FlowField& f) {
  ChannelRange r;
  channel_range(f.u_plane(), r.min_u, r.max_u);
  channel_range(f.v_plane(), r.min_v, r.max_v);
  return r;
}

}  // namespace

FlowField::FlowField(std::uint32_t width, std::uint32_t height,
                     FlowDirection direction)
    : width_(width),
      height_(height),
      direction_(direction),
      u_(cells(width, height), 0.0f),
      v_(cells(width, height), 0.0f) {}

FlowField::FlowField(std::uint32_t width, std::uint32_t height,
                     std::vector<float> u, std::vector<float> v,
                     FlowDirection direction)
    : width_(width),
      height_(height),
      direction_(direction),
      u_(std::move(u)),
      v_(std::move(v)) {
  if (u_.size() != cells(width, height) || v_.size() != cells(width, height)) {
    throw InvalidFlow("flow planes do not match " + std::to_string(width) +
                      "x" + std::to_string(height));
  }
  if (!all_finite()) throw InvalidFlow("flow field has non-finite values");
}

bool FlowField::all_finite() const {
  auto finite = [](float x) { return std::isfinite(x); };
  return std::all_of(u_.begin(), u_.end(), finite) &&
         std::all_of(v_.begin(), v_.end(), finite);
}

FlowVec FlowField::sample(double x, double y) const {
  if (!contains(x, y)) {
    throw OutOfBounds("flow lookup at (" + std::to_string(x) + ", " +
                      std::to_string(y) + ") outside " +
                      std::to_string(width_) + "x" + std::to_string(height_));
  }
  const auto x0 = static_cast<std::uint32_t>(x);
  const auto y0 = static_cast<std::uint32_t>(y);
  const std::uint32_t x1 = std::min(x0 + 1, width_ - 1);
  const std::uint32_t y1 = std::min(y0 + 1, height_ - 1);
  const double fx = x - x0;
  const double fy = y - y0;

  const std::size_t i00 = index(x0, y0), i10 = index(x1, y0);
  const std::size_t i01 = index(x0, y1), i11 = index(x1, y1);
  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w10 = fx * (1.0 - fy);
  const double w01 = (1.0 - fx) * fy;
  const double w11 = fx * fy;
  return {w00 * u_[i00] + w10 * u_[i10] + w01 * u_[i01] + w11 * u_[i11],
          w00 * v_[i00] + w10 * v_[i10] + w01 * v_[i01] + w11 * v_[i11]};
}

FlowVec sample_flow(const FlowField& field, double x, double y) {
  return field.sample(x, y);
}

QuantizedFlow quantize_flow(const FlowField& field) {
  if (!field.all_finite()) throw InvalidFlow("cannot quantize non-finite flow");
  QuantizedFlow q;
  q.width = field.width();
  q.height = field.height();
  q.range = range_of(field);
  const auto u = field.u_plane();
  const auto v = field.v_plane();
  q.q_u.resize(u.size());
  q.q_v.resize(v.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    q.q_u[i] = encode_one(u[i], q.range.min_u, q.range.max_u);
    q.q_v[i] = encode_one(v[i], q.range.min_v, q.range.max_v);
  }
  return q;
}

FlowField dequantize_flow(const QuantizedFlow& q, FlowDirection direction) {
  std::vector<float> u(q.q_u.size()), v(q.q_v.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = decode_one(q.q_u[i], q.range.min_u, q.range.max_u);
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = decode_one(q.q_v[i], q.range.min_v, q.range.max_v);
  }
  return FlowField(q.width, q.height, std::move(u), std::move(v), direction);
}

FlowVolume::FlowVolume(std::uint32_t num_frames, std::uint32_t width,
                       std::uint32_t height, std::vector<FlowField> forward,
                       std::vector<FlowField> backward)
    : num_frames_(num_frames),
      width_(width),
      height_(height),
      forward_(std::move(forward)),
      backward_(std::move(backward)) {
  if (num_frames_ == 0) throw InvalidFlow("volume needs at least one frame");
  const std::size_t steps = num_frames_ - 1;
  if (forward_.size() != steps) {
    throw InvalidFlow("expected " + std::to_string(steps) +
                      " forward fields, got " +
                      std::to_string(forward_.size()));
  }
  if (!backward_.empty() && backward_.size() != steps) {
    throw InvalidFlow("expected " + std::to_string(steps) +
                      " backward fields, got " +
                      std::to_string(backward_.size()));
  }
  meta_.reserve(forward_.size() + backward_.size());
  auto admit = [&](FlowField& f, FlowDirection d) {
    if (f.width() != width_ || f.height() != height_) {
      throw InvalidFlow("flow field size differs from volume size");
    }
    if (!f.all_finite()) throw InvalidFlow("flow field has non-finite values");
    f.set_direction(d);
    meta_.push_back(range_of(f));
  };
  for (auto& f : forward_) admit(f, FlowDirection::kForward);
  for (auto& f : backward_) admit(f, FlowDirection::kBackward);
}

std::vector<std::uint8_t> encode_flowpack(const FlowVolume& volume) {
  binio::Writer w;
  w.tag(flowpack::kMagic);
  w.u16(flowpack::kVersion);
  w.u8(flowpack::kCodecRaw8);
  const bool backward = !volume.backward_fields().empty();
  w.u8(backward ? flowpack::kFlagBackward : 0);
  w.u32(volume.num_frames());
  w.u32(volume.width());
  w.u32(volume.height());
  auto put = [&](const FlowField& f) {
    const QuantizedFlow q = quantize_flow(f);
    w.f32(q.range.min_u);
    w.f32(q.range.max_u);
    w.f32(q.range.min_v);
    w.f32(q.range.max_v);
    w.bytes(q.q_u);
    w.bytes(q.q_v);
  };
  for (const auto& f : volume.forward_fields()) put(f);
  for (const auto& f : volume.backward_fields()) put(f);
  return w.take();
}

FlowVolume decode_flowpack(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  r.expect_tag(flowpack::kMagic);
  std::size_t at = r.offset();
  if (const auto version = r.u16(); version != flowpack::kVersion) {
    throw FormatError(at, "unsupported FlowPack version " +
                              std::to_string(version));
  }
  at = r.offset();
  if (const auto codec = r.u8(); codec != flowpack::kCodecRaw8) {
    throw FormatError(at, "unsupported codec id " + std::to_string(codec));
  }
  at = r.offset();
  const std::uint8_t flags = r.u8();
  if ((flags & ~flowpack::kFlagBackward) != 0) {
    throw FormatError(at, "unknown flag bits");
  }
  at = r.offset();
  const std::uint32_t frames = r.u32();
  if (frames == 0) throw FormatError(at, "frame count must be >= 1");
  const std::uint32_t width = r.u32();
  const std::uint32_t height = r.u32();
  if (static_cast<std::uint64_t>(width) * height > (std::uint64_t{1} << 40)) {
    throw FormatError(at + 4, "frame size too large");
  }
  const std::size_t n = cells(width, height);
  const std::size_t steps = frames - 1;
  const std::size_t per_field = 16 + 2 * n;
  const bool backward = (flags & flowpack::kFlagBackward) != 0;
  const std::size_t fields = backward ? 2 * steps : steps;
  if (fields > 0 && (n == 0 || r.remaining() / per_field < fields)) {
    // Report truncation at the first field that cannot be complete.
    const std::size_t whole = n == 0 ? 0 : r.remaining() / per_field;
    throw FormatError(r.offset() + whole * per_field,
                      n == 0 ? "empty frame size" : "truncated input");
  }

  auto get = [&](FlowDirection dir) {
    QuantizedFlow q;
    q.width = width;
    q.height = height;
    const std::size_t range_at = r.offset();
    q.range.min_u = r.f32();
    q.range.max_u = r.f32();
    q.range.min_v = r.f32();
    q.range.max_v = r.f32();
    const ChannelRange& c = q.range;
    if (!std::isfinite(c.min_u) || !std::isfinite(c.max_u) ||
        !std::isfinite(c.min_v) || !std::isfinite(c.max_v) ||
        c.min_u > c.max_u || c.min_v > c.max_v) {
      throw FormatError(range_at, "invalid channel range");
    }
    auto pu = r.bytes(n);
    auto pv = r.bytes(n);
    q.q_u.assign(pu.begin(), pu.end());
    q.q_v.assign(pv.begin(), pv.end());
    return dequantize_flow(q, dir);
  };

  std::vector<FlowField> fwd, bwd;
  fwd.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) fwd.push_back(get(FlowDirection::kForward));
  if (backward) {
    bwd.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) bwd.push_back(get(FlowDirection::kBackward));
  }
  r.expect_end();
  return FlowVolume(frames, width, height, std::move(fwd), std::move(bwd));
}

std::size_t write_flowpack(const FlowVolume& volume, std::ostream& sink) {
  return binio::spill(sink, encode_flowpack(volume));
}

FlowVolume read_flowpack(std::istream& source) {
  const auto bytes = binio::slurp(source);
  return decode_flowpack(bytes);
}

std::vector<std::uint8_t> encode_raw_planar(const FlowVolume& volume) {
  binio::Writer w;
  auto put = [&](const FlowField& f) {
    for (float x : f.u_plane()) w.f32(x);
    for (float x : f.v_plane()) w.f32(x);
  };
  for (const auto& f : volume.forward_fields()) put(f);
  for (const auto& f : volume.backward_fields()) put(f);
  return w.take();
}

FlowVolume decode_raw_planar(std::span<const std::uint8_t> bytes,
                             std::uint32_t num_frames, std::uint32_t width,
                             std::uint32_t height, bool with_backward) {
  if (num_frames == 0) throw InvalidArgument("frame count must be >= 1");
  binio::Reader r(bytes);
  const std::size_t n = cells(width, height);
  auto get = [&](FlowDirection dir) {
    std::vector<float> u(n), v(n);
    for (auto& x : u) x = r.f32();
    for (auto& x : v) x = r.f32();
    return FlowField(width, height, std::move(u), std::move(v), dir);
  };
  std::vector<FlowField> fwd, bwd;
  for (std::uint32_t t = 0; t + 1 < num_frames; ++t) {
    fwd.push_back(get(FlowDirection::kForward));
  }
  if (with_backward) {
    for (std::uint32_t t = 0; t + 1 < num_frames; ++t) {
      bwd.push_back(get(FlowDirection::kBackward));
    }
  }
  r.expect_end();
  return FlowVolume(num_frames, width, height, std::move(fwd), std::move(bwd));
}

}  // namespace pico
