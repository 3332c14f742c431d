// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ground-truth scenes for the synthetic backend: explicit corpora loaded from
// TOML, and seeded procedural scenes built from a canonical coco18 figure.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "poseflow/core/config.hpp"
#include "poseflow/core/error.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/synth/params.hpp"

namespace poseflow {

struct Point2f {
  float x = 0;
  float y = 0;
  friend bool operator==(const Point2f&, const Point2f&) = default;
};

struct GroundTruthHuman {
  std::vector<std::optional<Point2f>> keypoints;

  uint32_t n_present() const {
    return static_cast<uint32_t>(std::count_if(keypoints.begin(), keypoints.end(),
                                               [](const auto& k) { return k.has_value(); }));
  }
  friend bool operator==(const GroundTruthHuman&, const GroundTruthHuman&) = default;
};

struct GroundTruthScene {
  std::vector<GroundTruthHuman> humans;
  uint32_t input_w = 0;
  uint32_t input_h = 0;
  uint64_t seed = 0;

  // Throws ContractError on any keypoint outside [0, w) x [0, h), wrong
  // keypoint count, or a human with fewer than `min_parts` keypoints.
  void validate(uint32_t keypoint_count, uint32_t min_parts = 4) const {
    for (size_t h = 0; h < humans.size(); ++h) {
      const auto& human = humans[h];
      if (human.keypoints.size() != keypoint_count) {
        throw ContractError("human " + std::to_string(h) + " has " + std::to_string(human.keypoints.size()) +
                            " keypoint slots, topology has " + std::to_string(keypoint_count));
      }
      if (human.n_present() < min_parts) {
        throw ContractError("human " + std::to_string(h) + " has fewer than " + std::to_string(min_parts) +
                            " keypoints");
      }
      for (size_t k = 0; k < human.keypoints.size(); ++k) {
        const auto& kp = human.keypoints[k];
        if (!kp) continue;
        if (!(kp->x >= 0 && kp->x < static_cast<float>(input_w) && kp->y >= 0 &&
              kp->y < static_cast<float>(input_h))) {
          throw ContractError("human " + std::to_string(h) + " keypoint " + std::to_string(k) + " at (" +
                              std::to_string(kp->x) + ", " + std::to_string(kp->y) + ") is outside the " +
                              std::to_string(input_w) + "x" + std::to_string(input_h) + " input");
        }
      }
    }
  }

  friend bool operator==(const GroundTruthScene&, const GroundTruthScene&) = default;
};

// A scene corpus keyed by seq_id.
struct SceneCorpus {
  uint32_t input_w = 0;
  uint32_t input_h = 0;
  std::vector<std::pair<uint64_t, GroundTruthScene>> scenes;
};

// ---------------------------------------------------------------------------
// Procedural scenes

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t scene_seed(uint64_t base_seed, uint64_t seq_id) {
  return splitmix64(base_seed ^ splitmix64(seq_id));
}

namespace detail {

// Uniform in [lo, hi) from the raw engine bits; std::uniform_*_distribution
// output differs between standard libraries.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

}  // namespace detail

// Canonical coco18 stick figure in pixels at scale 1, origin at the neck.
// Head-internal limbs are ~18 px so they stay >= 2 cells long at stride 8
// and the smallest scale.
inline const std::array<Point2f, 18>& canonical_coco18_figure() {
  static const std::array<Point2f, 18> kFigure = {{
      {0, -28},    // nose
      {0, 0},      // neck
      {-24, 0},    // right_shoulder
      {-30, 30},   // right_elbow
      {-32, 60},   // right_wrist
      {24, 0},     // left_shoulder
      {30, 30},    // left_elbow
      {32, 60},    // left_wrist
      {-14, 64},   // right_hip
      {-16, 106},  // right_knee
      {-18, 148},  // right_ankle
      {14, 64},    // left_hip
      {16, 106},   // left_knee
      {18, 148},   // left_ankle
      {-12, -42},  // right_eye
      {12, -42},   // left_eye
      {-28, -34},  // right_ear
      {28, -34},   // left_ear
  }};
  return kFigure;
}

struct ProceduralSpec {
  uint32_t min_humans = 1;
  uint32_t max_humans = 5;
  float min_scale = 0.85f;
  float max_scale = 1.15f;
};

// Minimum distance between same-type keypoints of two humans in a procedural
// scene: 6 sigma, converted to pixels.
inline float separation_px(const SynthParams& p) { return 6.0f * p.sigma_conf * static_cast<float>(p.stride); }

// True when every shared keypoint type of `a` and `b` is at least `min_dist`
// apart and their keypoint bounding boxes leave a gap of at least `gap` px.
inline bool humans_separated(const GroundTruthHuman& a, const GroundTruthHuman& b, float min_dist, float gap) {
  size_t n = std::min(a.keypoints.size(), b.keypoints.size());
  for (size_t k = 0; k < n; ++k) {
    if (!a.keypoints[k] || !b.keypoints[k]) continue;
    float dx = a.keypoints[k]->x - b.keypoints[k]->x;
    float dy = a.keypoints[k]->y - b.keypoints[k]->y;
    if (std::sqrt(dx * dx + dy * dy) < min_dist) return false;
  }
  auto box = [](const GroundTruthHuman& h) {
    std::array<float, 4> r = {1e30f, 1e30f, -1e30f, -1e30f};
    for (const auto& kp : h.keypoints) {
      if (!kp) continue;
      r[0] = std::min(r[0], kp->x);
      r[1] = std::min(r[1], kp->y);
      r[2] = std::max(r[2], kp->x);
      r[3] = std::max(r[3], kp->y);
    }
    return r;
  };
  auto ra = box(a);
  auto rb = box(b);
  bool x_apart = ra[2] + gap <= rb[0] || rb[2] + gap <= ra[0];
  bool y_apart = ra[3] + gap <= rb[1] || rb[3] + gap <= ra[1];
  return x_apart || y_apart;
}

// Deterministic scene of 1-5 scaled, translated copies of the canonical
// figure, pairwise separated per humans_separated(separation_px, 2*stride).
// Only defined for 18-keypoint (coco18-layout) topologies.
inline GroundTruthScene procedural_scene(uint64_t seed, uint32_t keypoint_count, uint32_t input_w, uint32_t input_h,
                                         const SynthParams& params, const ProceduralSpec& spec = {}) {
  const auto& figure = canonical_coco18_figure();
  if (keypoint_count != figure.size()) {
    throw ContractError("procedural scenes need an 18-keypoint coco18 topology");
  }
  std::mt19937_64 rng(seed);
  GroundTruthScene scene;
  scene.input_w = input_w;
  scene.input_h = input_h;
  scene.seed = seed;

  const float margin = static_cast<float>(params.stride);
  const float min_dist = separation_px(params);
  const float gap = 2.0f * static_cast<float>(params.stride);
  const auto target = static_cast<uint32_t>(
      detail::uniform(rng, spec.min_humans, static_cast<double>(spec.max_humans) + 1.0));

  float fx0 = 0, fy0 = 0, fx1 = 0, fy1 = 0;
  for (const auto& p : figure) {
    fx0 = std::min(fx0, p.x);
    fy0 = std::min(fy0, p.y);
    fx1 = std::max(fx1, p.x);
    fy1 = std::max(fy1, p.y);
  }

  constexpr int kAttempts = 400;
  for (uint32_t h = 0; h < target; ++h) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      auto scale = static_cast<float>(detail::uniform(rng, spec.min_scale, spec.max_scale));
      float lo_x = margin - fx0 * scale;
      float hi_x = static_cast<float>(input_w) - margin - fx1 * scale;
      float lo_y = margin - fy0 * scale;
      float hi_y = static_cast<float>(input_h) - margin - fy1 * scale;
      if (hi_x <= lo_x || hi_y <= lo_y) continue;
      auto tx = static_cast<float>(detail::uniform(rng, lo_x, hi_x));
      auto ty = static_cast<float>(detail::uniform(rng, lo_y, hi_y));
      GroundTruthHuman human;
      for (const auto& p : figure) {
        human.keypoints.push_back(Point2f{std::round(tx + p.x * scale), std::round(ty + p.y * scale)});
      }
      placed = std::all_of(scene.humans.begin(), scene.humans.end(),
                           [&](const GroundTruthHuman& o) { return humans_separated(human, o, min_dist, gap); });
      if (placed) scene.humans.push_back(std::move(human));
    }
    if (!placed) break;
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Corpus TOML
//
//   input_w = 640
//   input_h = 360
//   [[scene]]
//   seq_id = 0                      # optional; defaults to the scene's index
//   [[scene.human]]
//   keypoints = [[x, y], [], ...]   # one entry per keypoint; [] = missing

inline SceneCorpus corpus_from_toml(const toml::table& tbl, uint32_t keypoint_count, const std::string& source) {
  SceneCorpus corpus;
  auto w = tbl["input_w"].value<int64_t>();
  auto h = tbl["input_h"].value<int64_t>();
  if (!w || !h || *w < 1 || *h < 1) throw ConfigError(source + ": input_w and input_h must be positive integers");
  corpus.input_w = static_cast<uint32_t>(*w);
  corpus.input_h = static_cast<uint32_t>(*h);
  const auto* scenes = tbl["scene"].as_array();
  if (!scenes) return corpus;
  for (size_t s = 0; s < scenes->size(); ++s) {
    const std::string where = source + ": scene[" + std::to_string(s) + "]";
    const auto* st = (*scenes)[s].as_table();
    if (!st) throw ConfigError(where + " must be a table");
    GroundTruthScene scene;
    scene.input_w = corpus.input_w;
    scene.input_h = corpus.input_h;
    auto seq = (*st)["seq_id"].value<int64_t>();
    if ((*st)["seq_id"] && (!seq || *seq < 0)) throw ConfigError(where + ".seq_id must be a non-negative integer");
    uint64_t seq_id = seq ? static_cast<uint64_t>(*seq) : s;
    if (const auto* humans = (*st)["human"].as_array()) {
      for (size_t hi = 0; hi < humans->size(); ++hi) {
        const std::string hwhere = where + ".human[" + std::to_string(hi) + "]";
        const auto* ht = (*humans)[hi].as_table();
        const auto* kps = ht ? (*ht)["keypoints"].as_array() : nullptr;
        if (!kps) throw ConfigError(hwhere + " needs a keypoints array");
        if (kps->size() != keypoint_count) {
          throw ConfigError(hwhere + " has " + std::to_string(kps->size()) + " keypoints, topology has " +
                            std::to_string(keypoint_count));
        }
        GroundTruthHuman human;
        for (const auto& node : *kps) {
          const auto* xy = node.as_array();
          if (!xy || (xy->size() != 0 && xy->size() != 2)) throw ConfigError(hwhere + ": keypoints are [x, y] or []");
          if (xy->empty()) {
            human.keypoints.push_back(std::nullopt);
            continue;
          }
          auto x = (*xy)[0].value<double>();
          auto y = (*xy)[1].value<double>();
          if (!x || !y) throw ConfigError(hwhere + ": keypoint coordinates must be numbers");
          human.keypoints.push_back(Point2f{static_cast<float>(*x), static_cast<float>(*y)});
        }
        scene.humans.push_back(std::move(human));
      }
    }
    try {
      scene.validate(keypoint_count);
    } catch (const ContractError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    corpus.scenes.emplace_back(seq_id, std::move(scene));
  }
  std::vector<uint64_t> ids;
  for (const auto& [id, sc] : corpus.scenes) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError(source + ": duplicate scene seq_id");
  return corpus;
}

inline SceneCorpus load_scene_corpus(const std::filesystem::path& path, uint32_t keypoint_count) {
  if (!std::filesystem::exists(path)) throw ConfigError("scene corpus not found: " + path.string());
  try {
    return corpus_from_toml(toml::parse_file(path.string()), keypoint_count, path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(path.string() + ": " + std::string(e.description()));
  }
}

inline std::string corpus_to_toml(const SceneCorpus& corpus) {
  std::ostringstream os;
  os << "input_w = " << corpus.input_w << "\ninput_h = " << corpus.input_h << "\n";
  for (const auto& [seq, scene] : corpus.scenes) {
    os << "\n[[scene]]\nseq_id = " << seq << "\n";
    for (const auto& human : scene.humans) {
      os << "[[scene.human]]\nkeypoints = [";
      for (size_t k = 0; k < human.keypoints.size(); ++k) {
        if (k) os << ", ";
        const auto& kp = human.keypoints[k];
        if (kp) {
          os << "[" << detail::toml_float(kp->x) << ", " << detail::toml_float(kp->y) << "]";
        } else {
          os << "[]";
        }
      }
      os << "]\n";
    }
  }
  return os.str();
}

}  // namespace poseflow
