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
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace pico {

enum class FlowDirection : std::uint8_t { kForward, kBackward };

struct FlowVec {
  double u = 0.0;
  double v = 0.0;
};

// One dense displacement field. Values are stored single precision in
// row-major order; all interpolation arithmetic is done in double.
class FlowField {
 public:
  FlowField() = default;
  FlowField(std::uint32_t width, std::uint32_t height,
            FlowDirection direction = FlowDirection::kForward);
  // Throws InvalidFlow on size mismatch or non-finite values.
  FlowField(std::uint32_t width, std::uint32_t height, std::vector<float> u,
            std::vector<float> v,
            FlowDirection direction = FlowDirection::kForward);

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  FlowDirection direction() const { return direction_; }
  void set_direction(FlowDirection d) { direction_ = d; }

  float u(std::uint32_t x, std::uint32_t y) const { return u_[index(x, y)]; }
  float v(std::uint32_t x, std::uint32_t y) const { return v_[index(x, y)]; }
  void set(std::uint32_t x, std::uint32_t y, float u, float v) {
    u_[index(x, y)] = u;
    v_[index(x, y)] = v;
  }

  std::span<const float> u_plane() const { return u_; }
  std::span<const float> v_plane() const { return v_; }

  bool all_finite() const;

  // Bilinear lookup on [0, W-1] x [0, H-1]; exact at lattice points.
  // Throws OutOfBounds outside that rectangle (and for NaN coordinates).
  FlowVec sample(double x, double y) const;

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= static_cast<double>(width_) - 1.0 &&
           y <= static_cast<double>(height_) - 1.0;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  std::size_t index(std::uint32_t x, std::uint32_t y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  FlowDirection direction_ = FlowDirection::kForward;
  std::vector<float> u_;
  std::vector<float> v_;
};

FlowVec sample_flow(const FlowField& field, double x, double y);

struct ChannelRange {
  float min_u = 0.0f;
  float max_u = 0.0f;
  float min_v = 0.0f;
  float max_v = 0.0f;

  friend bool operator==(const ChannelRange&, const ChannelRange&) = default;
};

struct QuantizedFlow {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> q_u;
  std::vector<std::uint8_t> q_v;
  ChannelRange range;

  friend bool operator==(const QuantizedFlow&, const QuantizedFlow&) = default;
};

// code = round_half_away(255 (x - min) / (max - min)) per channel, with the
// channel range taken over the whole grid. A flat channel encodes as all
// zeros. Throws InvalidFlow on non-finite input.
QuantizedFlow quantize_flow(const FlowField& field);

// x = min + code (max - min) / 255. Codes 0 and 255 reproduce min and max
// exactly.
FlowField dequantize_flow(const QuantizedFlow& q,
                          FlowDirection direction = FlowDirection::kForward);

// Forward and backward flow of a T-frame clip. forward(t) maps frame t to
// t+1 and backward(t) maps frame t+1 to t, t in [0, T-2]. The backward
// stack may be absent (files written without it); tracking needs it.
class FlowVolume {
 public:
  FlowVolume() = default;
  FlowVolume(std::uint32_t num_frames, std::uint32_t width,
             std::uint32_t height, std::vector<FlowField> forward,
             std::vector<FlowField> backward);

  std::uint32_t num_frames() const { return num_frames_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  bool has_backward() const { return !backward_.empty() || num_frames_ <= 1; }

  const FlowField& forward(std::uint32_t t) const { return forward_.at(t); }
  const FlowField& backward(std::uint32_t t) const { return backward_.at(t); }
  const std::vector<FlowField>& forward_fields() const { return forward_; }
  const std::vector<FlowField>& backward_fields() const { return backward_; }

  // Per-field channel ranges, forward fields first, then backward.
  const std::vector<ChannelRange>& quant_meta() const { return meta_; }

  friend bool operator==(const FlowVolume&, const FlowVolume&) = default;

 private:
  std::uint32_t num_frames_ = 0;
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<FlowField> forward_;
  std::vector<FlowField> backward_;
  std::vector<ChannelRange> meta_;
};

namespace flowpack {
inline constexpr char kMagic[] = "PCFL";
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint8_t kCodecRaw8 = 0;
inline constexpr std::uint8_t kFlagBackward = 0x01;
}  // namespace flowpack

// FlowPack container (little endian):
//   "PCFL" | u16 version=1 | u8 codec (0 = raw 8-bit) | u8 flags
//   (bit0: backward present) | u32 T | u32 width | u32 height
// then for each forward field and, if present, each backward field:
//   f32 min_u | f32 max_u | f32 min_v | f32 max_v | u8 u[W*H] | u8 v[W*H]
std::vector<std::uint8_t> encode_flowpack(const FlowVolume& volume);
FlowVolume decode_flowpack(std::span<const std::uint8_t> bytes);

std::size_t write_flowpack(const FlowVolume& volume, std::ostream& sink);
FlowVolume read_flowpack(std::istream& source);

// Raw planar float32 interchange used by the CLI: for each forward field
// and then each backward field, the u plane followed by the v plane, W*H
// little-endian f32 values each, row-major.
std::vector<std::uint8_t> encode_raw_planar(const FlowVolume& volume);
FlowVolume decode_raw_planar(std::span<const std::uint8_t> bytes,
                             std::uint32_t num_frames, std::uint32_t width,
                             std::uint32_t height, bool with_backward);

}  // namespace pico
