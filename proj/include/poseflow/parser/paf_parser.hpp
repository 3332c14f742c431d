// SPDX-License-Identifier: Apache-2.0
#pragma once

// Part-affinity-field pose parser: confidence-map peaks, PAF line-integral
// limb scoring, greedy per-limb matching and assembly of people.
//
// All orderings are explicit total orders, so output depends only on the
// input values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/tensor.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"
#include "poseflow/parser/params.hpp"

namespace poseflow {

struct Peak {
  uint32_t part = 0;
  uint32_t i = 0;  // feature row
  uint32_t j = 0;  // feature column
  float score = 0;
  uint32_t id = 0;  // unique within a frame

  friend bool operator==(const Peak&, const Peak&) = default;
};

struct LimbScore {
  float score = 0;
  float good_fraction = 0;
};

struct LimbConnection {
  uint32_t limb = 0;
  uint32_t peak_a = 0;
  uint32_t peak_b = 0;
  float score = 0;
  float good_fraction = 0;

  friend bool operator==(const LimbConnection&, const LimbConnection&) = default;
};

// Local maxima of one [rows, cols] confidence channel.
//
// A cell is a peak when it is >= conf_threshold and >= every cell of the
// centered nms_window x nms_window neighbourhood (clipped at the borders).
// Among equal-valued cells of a neighbourhood only the lexicographically
// smallest (i, j) survives. Result is sorted by score desc, then (i, j) asc,
// and ids are id_base, id_base + 1, ... in that order.
inline std::vector<Peak> nms_peaks(std::span<const float> map, uint32_t rows, uint32_t cols,
                                   const ParserParams& params, uint32_t part = 0, uint32_t id_base = 0) {
  if (map.size() != size_t{rows} * cols) throw ContractError("nms_peaks: map size does not match extents");
  std::vector<Peak> peaks;
  if (map.empty()) return peaks;
  const auto half = static_cast<int64_t>(params.nms_window / 2);
  const auto r = static_cast<int64_t>(rows);
  const auto c = static_cast<int64_t>(cols);
  auto at = [&](int64_t i, int64_t j) { return map[static_cast<size_t>(i * c + j)]; };

  // Separable window maximum: along rows, then along columns.
  std::vector<float> row_max(map.size());
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      float m = at(i, j);
      for (int64_t jj = std::max<int64_t>(0, j - half); jj <= std::min(c - 1, j + half); ++jj) m = std::max(m, at(i, jj));
      row_max[static_cast<size_t>(i * c + j)] = m;
    }
  }
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      const float v = at(i, j);
      if (!(v >= params.conf_threshold)) continue;
      float m = v;
      for (int64_t ii = std::max<int64_t>(0, i - half); ii <= std::min(r - 1, i + half); ++ii) {
        m = std::max(m, row_max[static_cast<size_t>(ii * c + j)]);
      }
      if (v < m) continue;
      // v is the window maximum; it loses to an equal cell that precedes it.
      bool suppressed = false;
      for (int64_t ii = std::max<int64_t>(0, i - half); ii <= i && !suppressed; ++ii) {
        const int64_t j_end = ii < i ? std::min(c - 1, j + half) : j - 1;
        for (int64_t jj = std::max<int64_t>(0, j - half); jj <= j_end; ++jj) {
          if (at(ii, jj) == v) {
            suppressed = true;
            break;
          }
        }
      }
      if (!suppressed) {
        peaks.push_back(Peak{part, static_cast<uint32_t>(i), static_cast<uint32_t>(j), v, 0});
      }
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  for (size_t n = 0; n < peaks.size(); ++n) peaks[n].id = id_base + static_cast<uint32_t>(n);
  return peaks;
}

inline std::vector<Peak> nms_peaks(const TensorF32& channel, const ParserParams& params, uint32_t part = 0,
                                   uint32_t id_base = 0) {
  if (channel.rank() != 2) throw ContractError("nms_peaks expects an [H, W] channel");
  return nms_peaks(channel.data(), channel.dim(0), channel.dim(1), params, part, id_base);
}

// Line integral of the limb's PAF between two peaks: n_samples evenly spaced
// points from a to b, each read from its nearest cell and projected onto the
// unit vector a -> b. Coincident peaks score (0, 0).
inline LimbScore score_limb(const TensorF32& paf, PafChannels channels, const Peak& a, const Peak& b,
                            const ParserParams& params) {
  if (a.i == b.i && a.j == b.j) return {};
  const uint32_t rows = paf.dim(1);
  const uint32_t cols = paf.dim(2);
  auto px = paf.slice(channels.x);
  auto py = paf.slice(channels.y);
  const float dx = static_cast<float>(b.j) - static_cast<float>(a.j);
  const float dy = static_cast<float>(b.i) - static_cast<float>(a.i);
  const float len = std::sqrt(dx * dx + dy * dy);
  const float vx = dx / len;
  const float vy = dy / len;
  const uint32_t n = params.n_samples;
  float sum = 0.0f;
  uint32_t good = 0;
  for (uint32_t u = 0; u < n; ++u) {
    const float t = static_cast<float>(u) / static_cast<float>(n - 1);
    const float x = static_cast<float>(a.j) + t * dx;
    const float y = static_cast<float>(a.i) + t * dy;
    const auto j = static_cast<uint32_t>(std::clamp<long>(std::lround(x), 0, static_cast<long>(cols) - 1));
    const auto i = static_cast<uint32_t>(std::clamp<long>(std::lround(y), 0, static_cast<long>(rows) - 1));
    const size_t cell = size_t{i} * cols + j;
    const float d = px[cell] * vx + py[cell] * vy;
    sum += d;
    if (d >= params.sample_dot_threshold) ++good;
  }
  return {sum / static_cast<float>(n), static_cast<float>(good) / static_cast<float>(n)};
}

// Candidate matching per limb type. `peaks_by_part[k]` holds the peaks of
// keypoint k. Within one limb type a peak is used at most once; pairs are
// taken greedily by score desc, ties by (id_a, id_b) asc. Output is grouped
// by limb index, in acceptance order within a limb.
inline std::vector<LimbConnection> connect_limbs(const std::vector<std::vector<Peak>>& peaks_by_part,
                                                 const TensorF32& paf, const SkeletonTopology& topo,
                                                 const ParserParams& params) {
  std::vector<LimbConnection> accepted;
  for (uint32_t l = 0; l < topo.limb_count(); ++l) {
    const Limb limb = topo.limbs()[l];
    if (limb.a >= peaks_by_part.size() || limb.b >= peaks_by_part.size()) continue;
    const auto& cand_a = peaks_by_part[limb.a];
    const auto& cand_b = peaks_by_part[limb.b];
    if (cand_a.empty() || cand_b.empty()) continue;
    std::vector<LimbConnection> candidates;
    for (const Peak& pa : cand_a) {
      for (const Peak& pb : cand_b) {
        LimbScore s = score_limb(paf, topo.paf_channels()[l], pa, pb, params);
        if (s.good_fraction >= params.good_fraction_min && s.score > 0.0f) {
          candidates.push_back({l, pa.id, pb.id, s.score, s.good_fraction});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const LimbConnection& x, const LimbConnection& y) {
      if (x.score != y.score) return x.score > y.score;
      return std::tie(x.peak_a, x.peak_b) < std::tie(y.peak_a, y.peak_b);
    });
    std::vector<uint32_t> used_a;
    std::vector<uint32_t> used_b;
    const size_t cap = std::min(cand_a.size(), cand_b.size());
    size_t taken = 0;
    for (const auto& cand : candidates) {
      if (taken == cap) break;
      if (std::find(used_a.begin(), used_a.end(), cand.peak_a) != used_a.end() ||
          std::find(used_b.begin(), used_b.end(), cand.peak_b) != used_b.end()) {
        continue;
      }
      used_a.push_back(cand.peak_a);
      used_b.push_back(cand.peak_b);
      accepted.push_back(cand);
      ++taken;
    }
  }
  return accepted;
}

// Groups connections into people. `peaks` must be indexed by id
// (peaks[n].id == n). Coordinates are converted to input pixels with the
// cell-center convention.
inline std::vector<HumanPose> assemble_humans(const std::vector<LimbConnection>& connections,
                                              std::span<const Peak> peaks, const SkeletonTopology& topo,
                                              const ParserParams& params, uint32_t stride) {
  constexpr int64_t kNone = -1;
  struct Candidate {
    std::vector<int64_t> peak_of_part;
    float peak_score = 0;
    float connection_score = 0;
    uint32_t n_parts = 0;
    bool alive = true;
  };
  const uint32_t k_count = topo.keypoint_count();
  std::vector<Candidate> humans;
  std::vector<int64_t> owner(peaks.size(), kNone);  // peak id -> human index

  auto add_part = [&](size_t h, uint32_t peak_id) {
    const Peak& pk = peaks[peak_id];
    humans[h].peak_of_part[pk.part] = peak_id;
    humans[h].peak_score += pk.score;
    ++humans[h].n_parts;
    owner[peak_id] = static_cast<int64_t>(h);
  };

  std::vector<LimbConnection> ordered(connections);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LimbConnection& x, const LimbConnection& y) { return x.limb < y.limb; });

  for (const auto& conn : ordered) {
    if (conn.peak_a >= peaks.size() || conn.peak_b >= peaks.size()) {
      throw ContractError("connection references an unknown peak id");
    }
    const Limb limb = topo.limbs()[conn.limb];
    const int64_t ha = owner[conn.peak_a];
    const int64_t hb = owner[conn.peak_b];
    if (ha == kNone && hb == kNone) {
      humans.push_back(Candidate{std::vector<int64_t>(k_count, kNone)});
      add_part(humans.size() - 1, conn.peak_a);
      add_part(humans.size() - 1, conn.peak_b);
      humans.back().connection_score += conn.score;
    } else if (ha != kNone && hb == kNone) {
      auto& h = humans[static_cast<size_t>(ha)];
      if (h.peak_of_part[limb.b] != kNone) continue;  // slot taken by another peak
      add_part(static_cast<size_t>(ha), conn.peak_b);
      h.connection_score += conn.score;
    } else if (ha == kNone && hb != kNone) {
      auto& h = humans[static_cast<size_t>(hb)];
      if (h.peak_of_part[limb.a] != kNone) continue;
      add_part(static_cast<size_t>(hb), conn.peak_a);
      h.connection_score += conn.score;
    } else if (ha == hb) {
      humans[static_cast<size_t>(ha)].connection_score += conn.score;
    } else {
      auto& keep = humans[static_cast<size_t>(ha)];
      auto& gone = humans[static_cast<size_t>(hb)];
      bool conflict = false;
      for (uint32_t k = 0; k < k_count && !conflict; ++k) {
        conflict = keep.peak_of_part[k] != kNone && gone.peak_of_part[k] != kNone;
      }
      if (conflict) continue;
      for (uint32_t k = 0; k < k_count; ++k) {
        if (gone.peak_of_part[k] == kNone) continue;
        keep.peak_of_part[k] = gone.peak_of_part[k];
        owner[static_cast<size_t>(gone.peak_of_part[k])] = ha;
      }
      keep.peak_score += gone.peak_score;
      keep.connection_score += gone.connection_score + conn.score;
      keep.n_parts += gone.n_parts;
      gone.alive = false;
    }
  }

  struct Ranked {
    HumanPose pose;
    int64_t first_peak;
  };
  std::vector<Ranked> out;
  for (const auto& h : humans) {
    if (!h.alive || h.n_parts < params.min_parts) continue;
    const float score = (h.peak_score + h.connection_score) / static_cast<float>(h.n_parts);
    if (score < params.min_human_score) continue;
    Ranked r{HumanPose{std::vector<std::optional<Keypoint>>(k_count), score, h.n_parts},
             std::numeric_limits<int64_t>::max()};
    for (uint32_t k = 0; k < k_count; ++k) {
      if (h.peak_of_part[k] == kNone) continue;
      const Peak& pk = peaks[static_cast<size_t>(h.peak_of_part[k])];
      r.pose.keypoints[k] = Keypoint{cell_to_pixel(static_cast<float>(pk.j), stride),
                                     cell_to_pixel(static_cast<float>(pk.i), stride), pk.score};
      r.first_peak = std::min(r.first_peak, h.peak_of_part[k]);
    }
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const Ranked& x, const Ranked& y) {
    if (x.pose.score != y.pose.score) return x.pose.score > y.pose.score;
    return x.first_peak < y.first_peak;
  });
  std::vector<HumanPose> result;
  result.reserve(out.size());
  for (auto& r : out) result.push_back(std::move(r.pose));
  return result;
}

// Peaks of every keypoint channel, ids assigned part by part.
inline std::vector<std::vector<Peak>> extract_peaks(const FeatureMaps& maps, uint32_t keypoint_count,
                                                    const ParserParams& params) {
  std::vector<std::vector<Peak>> by_part(keypoint_count);
  uint32_t next_id = 0;
  for (uint32_t k = 0; k < keypoint_count; ++k) {
    by_part[k] = nms_peaks(maps.conf.slice(k), maps.height(), maps.width(), params, k, next_id);
    next_id += static_cast<uint32_t>(by_part[k].size());
  }
  return by_part;
}

inline void check_maps_match(const FeatureMaps& maps, const SkeletonTopology& topo) {
  const auto& c = maps.conf;
  const auto& p = maps.paf;
  if (c.rank() != 3 || p.rank() != 3 || c.dim(0) != topo.keypoint_count() + 1 ||
      p.dim(0) != 2 * topo.limb_count() || c.dim(1) != p.dim(1) || c.dim(2) != p.dim(2) || maps.stride == 0) {
    throw ContractError("feature maps do not match topology '" + topo.name() + "' (" +
                        std::to_string(topo.keypoint_count()) + " keypoints, " +
                        std::to_string(topo.limb_count()) + " limbs)");
  }
}

// nms_peaks -> connect_limbs -> assemble_humans.
inline std::vector<HumanPose> parse(const FeatureMaps& maps, const SkeletonTopology& topo,
                                    const ParserParams& params) {
  check_maps_match(maps, topo);
  auto by_part = extract_peaks(maps, topo.keypoint_count(), params);
  std::vector<Peak> flat;
  for (const auto& part : by_part) flat.insert(flat.end(), part.begin(), part.end());
  auto connections = connect_limbs(by_part, maps.paf, topo, params);
  return assemble_humans(connections, flat, topo, params, maps.stride);
}

}  // namespace poseflow
