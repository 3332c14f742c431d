// SPDX-License-Identifier: Apache-2.0
#pragma once

// Scores parser output against the ground truth a synthetic frame was
// rendered from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "poseflow/core/types.hpp"
#include "poseflow/synth/scene.hpp"

namespace poseflow {

struct RecoveryStats {
  uint64_t gt_humans = 0;
  uint64_t gt_keypoints = 0;
  uint64_t recovered_keypoints = 0;  // within tolerance in the matched person
  uint64_t predicted_humans = 0;
  uint64_t unmatched_large_humans = 0;  // >= large_parts parts, no ground-truth match

  double recall() const {
    return gt_keypoints == 0 ? 1.0 : static_cast<double>(recovered_keypoints) / static_cast<double>(gt_keypoints);
  }

  RecoveryStats& operator+=(const RecoveryStats& o) {
    gt_humans += o.gt_humans;
    gt_keypoints += o.gt_keypoints;
    recovered_keypoints += o.recovered_keypoints;
    predicted_humans += o.predicted_humans;
    unmatched_large_humans += o.unmatched_large_humans;
    return *this;
  }
};

// One-to-one matching of predicted to ground-truth people, greedy on the
// number of keypoints within `tolerance_px` (ties: lower indices first). A
// prediction matches when at least half of its parts agree with its partner.
inline RecoveryStats evaluate_recovery(const GroundTruthScene& scene, const std::vector<HumanPose>& poses,
                                       float tolerance_px, uint32_t large_parts = 6) {
  RecoveryStats st;
  st.gt_humans = scene.humans.size();
  st.predicted_humans = poses.size();
  for (const auto& h : scene.humans) st.gt_keypoints += h.n_present();

  struct Pair {
    uint32_t hits;
    size_t pred;
    size_t gt;
  };
  std::vector<Pair> pairs;
  for (size_t p = 0; p < poses.size(); ++p) {
    for (size_t g = 0; g < scene.humans.size(); ++g) {
      uint32_t hits = 0;
      const auto& gt = scene.humans[g].keypoints;
      const auto& pr = poses[p].keypoints;
      for (size_t k = 0; k < std::min(gt.size(), pr.size()); ++k) {
        if (!gt[k] || !pr[k]) continue;
        if (std::hypot(gt[k]->x - pr[k]->x, gt[k]->y - pr[k]->y) <= tolerance_px) ++hits;
      }
      if (hits > 0) pairs.push_back({hits, p, g});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.hits != b.hits) return a.hits > b.hits;
    return std::tie(a.pred, a.gt) < std::tie(b.pred, b.gt);
  });
  std::vector<bool> pred_used(poses.size());
  std::vector<bool> gt_used(scene.humans.size());
  std::vector<bool> pred_matched(poses.size());
  for (const auto& pr : pairs) {
    if (pred_used[pr.pred] || gt_used[pr.gt]) continue;
    pred_used[pr.pred] = true;
    gt_used[pr.gt] = true;
    st.recovered_keypoints += pr.hits;
    pred_matched[pr.pred] = 2 * pr.hits >= poses[pr.pred].n_parts;
  }
  for (size_t p = 0; p < poses.size(); ++p) {
    if (!pred_matched[p] && poses[p].n_parts >= large_parts) ++st.unmatched_large_humans;
  }
  return st;
}

}  // namespace poseflow
