// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "poseflow/core/tensor.hpp"

namespace poseflow {

inline int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// One decoded image. `image` is [H, W, 3] with values in [0, 1].
struct Frame {
  uint64_t seq_id = 0;
  TensorF32 image;
  int64_t ingest_ns = 0;

  uint32_t height() const { return image.dim(0); }
  uint32_t width() const { return image.dim(1); }
};

// Inference output for one frame. conf is [K+1, H', W'] (channel K is the
// background), paf is [2L, H', W'].
struct FeatureMaps {
  TensorF32 conf;
  TensorF32 paf;
  uint32_t stride = 8;
  uint64_t frame_ref = 0;

  uint32_t height() const { return conf.dim(1); }
  uint32_t width() const { return conf.dim(2); }

  friend bool operator==(const FeatureMaps&, const FeatureMaps&) = default;
};

struct Keypoint {
  float x = 0;
  float y = 0;
  float score = 0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

// A parsed person in network-input pixel coordinates.
struct HumanPose {
  std::vector<std::optional<Keypoint>> keypoints;
  float score = 0;
  uint32_t n_parts = 0;

  friend bool operator==(const HumanPose&, const HumanPose&) = default;
};

// Feature cell index -> input pixel coordinate of the cell center.
constexpr float cell_to_pixel(float cell, uint32_t stride) {
  return (cell + 0.5f) * static_cast<float>(stride) - 0.5f;
}

// Inverse of cell_to_pixel, in fractional cells.
constexpr float pixel_to_cell(float pixel, uint32_t stride) {
  return (pixel + 0.5f) / static_cast<float>(stride) - 0.5f;
}

}  // namespace poseflow
