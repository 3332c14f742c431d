// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/tensor.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"
#include "poseflow/synth/params.hpp"
#include "poseflow/synth/scene.hpp"

namespace poseflow {

// Gaussians are evaluated out to this many sigmas; beyond it the value is
// below 1.6e-8 and written as 0.
inline constexpr float kGaussianCutoffSigmas = 6.0f;

// Distance from (px, py) to the segment a-b.
inline float point_segment_distance(float px, float py, float ax, float ay, float bx, float by) {
  float dx = bx - ax;
  float dy = by - ay;
  float len2 = dx * dx + dy * dy;
  float t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  float cx = ax + t * dx - px;
  float cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

// Renders confidence and PAF maps of `scene` at feature resolution
// (input / stride). See SynthParams for the field widths.
inline FeatureMaps render_feature_maps(const GroundTruthScene& scene, const SkeletonTopology& topo,
                                       const SynthParams& p, uint64_t frame_ref = 0) {
  p.validate();
  if (scene.input_w % p.stride != 0 || scene.input_h % p.stride != 0) {
    throw ContractError("scene extents are not divisible by stride " + std::to_string(p.stride));
  }
  scene.validate(topo.keypoint_count(), 0);

  const uint32_t rows = scene.input_h / p.stride;
  const uint32_t cols = scene.input_w / p.stride;
  const uint32_t k_count = topo.keypoint_count();
  const uint32_t l_count = topo.limb_count();

  FeatureMaps maps;
  maps.stride = p.stride;
  maps.frame_ref = frame_ref;
  maps.conf = TensorF32({k_count + 1, rows, cols});
  maps.paf = TensorF32({2 * l_count, rows, cols});

  const float inv_two_sigma2 = 1.0f / (2.0f * p.sigma_conf * p.sigma_conf);
  const float reach = kGaussianCutoffSigmas * p.sigma_conf;
  // Half-open index range covering [lo, hi], clipped to [0, n).
  auto cell_range = [](float lo, float hi, uint32_t n) {
    auto first = static_cast<int64_t>(std::floor(lo));
    auto last = static_cast<int64_t>(std::ceil(hi));
    return std::pair<uint32_t, uint32_t>(static_cast<uint32_t>(std::clamp<int64_t>(first, 0, n)),
                                         static_cast<uint32_t>(std::clamp<int64_t>(last + 1, 0, n)));
  };

  for (const auto& human : scene.humans) {
    for (uint32_t k = 0; k < k_count; ++k) {
      const auto& kp = human.keypoints[k];
      if (!kp) continue;
      const float cx = pixel_to_cell(kp->x, p.stride);
      const float cy = pixel_to_cell(kp->y, p.stride);
      auto [i0, i1] = cell_range(cy - reach, cy + reach, rows);
      auto [j0, j1] = cell_range(cx - reach, cx + reach, cols);
      for (uint32_t i = i0; i < i1; ++i) {
        for (uint32_t j = j0; j < j1; ++j) {
          float dx = static_cast<float>(j) - cx;
          float dy = static_cast<float>(i) - cy;
          float d2 = dx * dx + dy * dy;
          if (d2 > reach * reach) continue;
          float& cell = maps.conf.at(k, i, j);
          cell = std::max(cell, std::exp(-d2 * inv_two_sigma2));
        }
      }
    }
  }
  for (uint32_t i = 0; i < rows; ++i) {
    for (uint32_t j = 0; j < cols; ++j) {
      float m = 0.0f;
      for (uint32_t k = 0; k < k_count; ++k) m = std::max(m, maps.conf.at(k, i, j));
      maps.conf.at(k_count, i, j) = 1.0f - m;
    }
  }

  std::vector<float> sum_x(size_t{rows} * cols);
  std::vector<float> sum_y(sum_x.size());
  std::vector<uint32_t> hits(sum_x.size());
  for (uint32_t l = 0; l < l_count; ++l) {
    const Limb limb = topo.limbs()[l];
    std::fill(sum_x.begin(), sum_x.end(), 0.0f);
    std::fill(sum_y.begin(), sum_y.end(), 0.0f);
    std::fill(hits.begin(), hits.end(), 0u);
    bool any = false;
    for (const auto& human : scene.humans) {
      const auto& ka = human.keypoints[limb.a];
      const auto& kb = human.keypoints[limb.b];
      if (!ka || !kb) continue;
      const float ax = pixel_to_cell(ka->x, p.stride);
      const float ay = pixel_to_cell(ka->y, p.stride);
      const float bx = pixel_to_cell(kb->x, p.stride);
      const float by = pixel_to_cell(kb->y, p.stride);
      const float len = std::hypot(bx - ax, by - ay);
      if (len == 0.0f) continue;
      const float vx = (bx - ax) / len;
      const float vy = (by - ay) / len;
      const float hw = p.paf_halfwidth;
      auto [i0, i1] = cell_range(std::min(ay, by) - hw, std::max(ay, by) + hw, rows);
      auto [j0, j1] = cell_range(std::min(ax, bx) - hw, std::max(ax, bx) + hw, cols);
      for (uint32_t i = i0; i < i1; ++i) {
        for (uint32_t j = j0; j < j1; ++j) {
          if (point_segment_distance(static_cast<float>(j), static_cast<float>(i), ax, ay, bx, by) > hw) {
            continue;
          }
          const size_t c = size_t{i} * cols + j;
          sum_x[c] += vx;
          sum_y[c] += vy;
          ++hits[c];
          any = true;
        }
      }
    }
    if (!any) continue;
    auto out_x = maps.paf.slice(topo.paf_channels()[l].x);
    auto out_y = maps.paf.slice(topo.paf_channels()[l].y);
    for (size_t c = 0; c < hits.size(); ++c) {
      if (hits[c] == 0) continue;
      float x = sum_x[c];
      float y = sum_y[c];
      if (hits[c] > 1) {
        x /= static_cast<float>(hits[c]);
        y /= static_cast<float>(hits[c]);
        float norm = std::hypot(x, y);
        if (norm > 1.0f) {
          x /= norm;
          y /= norm;
        }
      }
      out_x[c] = x;
      out_y[c] = y;
    }
  }
  return maps;
}

}  // namespace poseflow
