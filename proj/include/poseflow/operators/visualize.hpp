// SPDX-License-Identifier: Apache-2.0
#pragma once

// Skeleton overlays on [H, W, 3] images. Everything is clipped to the image.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/tensor.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"

namespace poseflow {

struct Rgb {
  float r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct OverlayStyle {
  uint32_t keypoint_radius = 3;
  uint32_t limb_thickness = 2;
  bool score_label = false;

  void validate() const {
    if (keypoint_radius < 1) throw ConfigError("overlay keypoint radius must be >= 1");
    if (limb_thickness < 1) throw ConfigError("overlay limb thickness must be >= 1");
  }
};

// Fixed hue wheel indexed by part (or limb) index.
inline Rgb part_color(uint32_t index) {
  static constexpr std::array<std::array<uint8_t, 3>, 12> kPalette = {{{255, 0, 0},
                                                                       {255, 128, 0},
                                                                       {255, 255, 0},
                                                                       {128, 255, 0},
                                                                       {0, 255, 0},
                                                                       {0, 255, 128},
                                                                       {0, 255, 255},
                                                                       {0, 128, 255},
                                                                       {0, 0, 255},
                                                                       {128, 0, 255},
                                                                       {255, 0, 255},
                                                                       {255, 0, 128}}};
  const auto& c = kPalette[index % kPalette.size()];
  return {c[0] / 255.0f, c[1] / 255.0f, c[2] / 255.0f};
}

class Canvas {
 public:
  explicit Canvas(TensorF32& image) : img_(image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw ContractError("overlay expects an [H, W, 3] image");
    h_ = static_cast<int64_t>(image.dim(0));
    w_ = static_cast<int64_t>(image.dim(1));
  }

  void put(int64_t x, int64_t y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    float* px = img_.values().data() + (y * w_ + x) * 3;
    px[0] = c.r;
    px[1] = c.g;
    px[2] = c.b;
  }

  // Pixels with dx^2 + dy^2 <= r^2.
  void disc(int64_t cx, int64_t cy, int64_t r, Rgb c) {
    for (int64_t dy = -r; dy <= r; ++dy) {
      for (int64_t dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy <= r * r) put(cx + dx, cy + dy, c);
      }
    }
  }

  // Bresenham line; thickness t stamps a disc of radius t / 2 per point.
  void line(int64_t x0, int64_t y0, int64_t x1, int64_t y1, uint32_t thickness, Rgb c) {
    const int64_t r = thickness / 2;
    const int64_t dx = std::abs(x1 - x0);
    const int64_t dy = -std::abs(y1 - y0);
    const int64_t sx = x0 < x1 ? 1 : -1;
    const int64_t sy = y0 < y1 ? 1 : -1;
    int64_t err = dx + dy;
    for (;;) {
      if (r == 0) {
        put(x0, y0, c);
      } else {
        disc(x0, y0, r, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const int64_t e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  // 3x5 bitmap digits, top-left at (x, y).
  void text(int64_t x, int64_t y, const std::string& digits, Rgb c) {
    static constexpr std::array<uint16_t, 10> kFont = {0x7B6F, 0x2492, 0x73E7, 0x73CF, 0x5BC9,
                                                       0x79CF, 0x79EF, 0x7249, 0x7BEF, 0x7BCF};
    for (char ch : digits) {
      if (ch >= '0' && ch <= '9') {
        const uint16_t glyph = kFont[static_cast<size_t>(ch - '0')];
        for (int row = 0; row < 5; ++row) {
          for (int col = 0; col < 3; ++col) {
            if (glyph & (1u << (14 - (row * 3 + col)))) put(x + col, y + row, c);
          }
        }
      }
      x += 4;
    }
  }

 private:
  TensorF32& img_;
  int64_t h_ = 0;
  int64_t w_ = 0;
};

// Draws poses given in network-input pixels onto an image of the original
// frame size; scale_x / scale_y map input pixels to image pixels with the
// half-pixel convention of the resize. Limbs go first in topology order,
// then keypoints by part index.
inline TensorF32 draw_overlay(TensorF32 image, const std::vector<HumanPose>& poses, const SkeletonTopology& topo,
                              const OverlayStyle& style, float scale_x = 1.0f, float scale_y = 1.0f) {
  style.validate();
  Canvas canvas(image);
  auto to_px = [&](const Keypoint& k) {
    return std::pair<int64_t, int64_t>{std::lround((k.x + 0.5f) * scale_x - 0.5f),
                                       std::lround((k.y + 0.5f) * scale_y - 0.5f)};
  };
  for (const auto& pose : poses) {
    for (uint32_t l = 0; l < topo.limb_count(); ++l) {
      const Limb limb = topo.limbs()[l];
      if (limb.a >= pose.keypoints.size() || limb.b >= pose.keypoints.size()) continue;
      const auto& a = pose.keypoints[limb.a];
      const auto& b = pose.keypoints[limb.b];
      if (!a || !b) continue;
      auto [x0, y0] = to_px(*a);
      auto [x1, y1] = to_px(*b);
      canvas.line(x0, y0, x1, y1, style.limb_thickness, part_color(l));
    }
  }
  for (const auto& pose : poses) {
    for (uint32_t k = 0; k < pose.keypoints.size(); ++k) {
      if (!pose.keypoints[k]) continue;
      auto [x, y] = to_px(*pose.keypoints[k]);
      canvas.disc(x, y, style.keypoint_radius, part_color(k));
    }
  }
  if (style.score_label) {
    for (const auto& pose : poses) {
      for (const auto& kp : pose.keypoints) {
        if (!kp) continue;
        auto [x, y] = to_px(*kp);
        const long pct = std::lround(std::clamp(pose.score, 0.0f, 1.0f) * 100.0f);
        canvas.text(x + static_cast<int64_t>(style.keypoint_radius) + 2, y - 2, std::to_string(pct), Rgb{1, 1, 1});
        break;
      }
    }
  }
  return image;
}

}  // namespace poseflow
