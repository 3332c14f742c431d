// SPDX-License-Identifier: Apache-2.0
#pragma once

// Quick oracle checks behind `poseflow selftest`. Each check reports pass or
// fail with a one-line detail; none of them needs more than a second.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "poseflow/bench/model.hpp"
#include "poseflow/core/config.hpp"
#include "poseflow/core/formats.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/operators/pose_pipeline.hpp"
#include "poseflow/parser/paf_parser.hpp"
#include "poseflow/synth/evaluate.hpp"
#include "poseflow/synth/render.hpp"
#include "poseflow/synth/scene.hpp"

namespace poseflow {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string hpt1_bytes(const TensorF32& t) {
  std::ostringstream os;
  write_tensor(t, os);
  return os.str();
}

inline CheckResult check_hpt1(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<uint32_t> rank(1, 4);
  std::uniform_int_distribution<uint32_t> extent(1, 7);
  std::uniform_int_distribution<uint32_t> bits;
  for (int n = 0; n < 100; ++n) {
    std::vector<uint32_t> dims(rank(rng));
    for (auto& d : dims) d = extent(rng);
    TensorF32 t(dims);
    for (float& v : t.values()) {
      uint32_t b = bits(rng);
      if ((b >> 23 & 0xFF) == 0xFF) b &= ~(1u << 23);  // keep it finite
      std::memcpy(&v, &b, sizeof(v));
    }
    const std::string first = hpt1_bytes(t);
    std::istringstream is(first);
    TensorF32 back = read_tensor(is);
    if (back.dims() != t.dims() || hpt1_bytes(back) != first) {
      return {"hpt1_roundtrip", false, "instance " + std::to_string(n) + " differs after a round trip"};
    }
  }
  return {"hpt1_roundtrip", true, "100 random tensors bit-exact"};
}

inline CheckResult check_ppm(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<uint32_t> extent(1, 24);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int n = 0; n < 100; ++n) {
    const uint32_t w = extent(rng);
    const uint32_t h = extent(rng);
    std::string file = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (uint32_t i = 0; i < w * h * 3; ++i) file += static_cast<char>(byte(rng));
    std::istringstream is(file);
    TensorF32 image = read_ppm(is);
    std::ostringstream os;
    write_ppm(image, os);
    if (os.str() != file) return {"ppm_roundtrip", false, "instance " + std::to_string(n) + " differs"};
  }
  return {"ppm_roundtrip", true, "100 random images byte-identical"};
}

// Brute force: a cell is a peak if it clears the threshold, no cell of its
// window is larger, and no equal cell of its window comes first.
inline std::vector<std::tuple<uint32_t, uint32_t>> brute_peaks(const std::vector<float>& m, uint32_t rows,
                                                               uint32_t cols, float thr, uint32_t window) {
  std::vector<std::tuple<float, uint32_t, uint32_t>> found;
  const int half = static_cast<int>(window / 2);
  for (int i = 0; i < static_cast<int>(rows); ++i) {
    for (int j = 0; j < static_cast<int>(cols); ++j) {
      const float v = m[static_cast<size_t>(i) * cols + j];
      if (v < thr) continue;
      bool peak = true;
      for (int di = -half; di <= half && peak; ++di) {
        for (int dj = -half; dj <= half && peak; ++dj) {
          const int a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= static_cast<int>(rows) || b >= static_cast<int>(cols) || (di == 0 && dj == 0)) {
            continue;
          }
          const float u = m[static_cast<size_t>(a) * cols + b];
          if (u > v || (u == v && std::tie(a, b) < std::tie(i, j))) peak = false;
        }
      }
      if (peak) found.emplace_back(-v, static_cast<uint32_t>(i), static_cast<uint32_t>(j));
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::tuple<uint32_t, uint32_t>> out;
  for (const auto& [v, i, j] : found) out.emplace_back(i, j);
  return out;
}

inline CheckResult check_nms(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 12);
  ParserParams params;
  for (int n = 0; n < 200; ++n) {
    std::vector<float> m(16 * 16);
    for (float& v : m) v = static_cast<float>(level(rng)) / 12.0f;  // coarse levels force ties
    auto got = nms_peaks(m, 16, 16, params);
    auto want = brute_peaks(m, 16, 16, params.conf_threshold, params.nms_window);
    bool same = got.size() == want.size();
    for (size_t k = 0; same && k < got.size(); ++k) same = std::tie(got[k].i, got[k].j) == want[k];
    if (!same) return {"nms_oracle", false, "map " + std::to_string(n) + " disagrees with brute force"};
  }
  return {"nms_oracle", true, "200 random 16x16 maps match brute force"};
}

inline CheckResult check_score_limb(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> comp(-1.0f, 1.0f);
  std::uniform_int_distribution<uint32_t> cell(0, 15);
  ParserParams params;
  double worst = 0;
  for (int n = 0; n < 100; ++n) {
    const float vx = comp(rng), vy = comp(rng);
    TensorF32 paf({2, 16, 16});
    auto& v = paf.values();
    std::fill(v.begin(), v.begin() + 256, vx);
    std::fill(v.begin() + 256, v.end(), vy);
    Peak a{0, cell(rng), cell(rng), 1, 0};
    Peak b{1, cell(rng), cell(rng), 1, 1};
    if (a.i == b.i && a.j == b.j) b.j = (b.j + 1) % 16;
    const double dx = static_cast<double>(b.j) - a.j;
    const double dy = static_cast<double>(b.i) - a.i;
    const double len = std::hypot(dx, dy);
    const double exact = (vx * dx + vy * dy) / len;
    worst = std::max(worst, std::abs(score_limb(paf, {0, 1}, a, b, params).score - exact));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max error %.2e on constant fields", worst);
  return {"score_limb_constant", worst <= 1e-6, buf};
}

inline CheckResult check_recovery(const SkeletonTopology& topo, uint64_t seed) {
  if (topo.keypoint_count() != 18) return {"render_parse_recovery", false, "needs an 18-keypoint topology"};
  SynthParams sp;
  ParserParams pp;
  RecoveryStats total;
  for (uint64_t n = 0; n < 20; ++n) {
    auto scene = procedural_scene(scene_seed(seed, n), 18, 640, 360, sp);
    auto poses = parse(render_feature_maps(scene, topo, sp, n), topo, pp);
    total += evaluate_recovery(scene, poses, 2.0f * static_cast<float>(sp.stride));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "recall %.4f, %llu unmatched large humans over 20 scenes", total.recall(),
                static_cast<unsigned long long>(total.unmatched_large_humans));
  return {"render_parse_recovery", total.recall() >= 0.95 && total.unmatched_large_humans == 0, buf};
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CheckResult check_batch_invariance(const std::string& topology_path) {
  const auto root = std::filesystem::temp_directory_path() /
                    ("poseflow_selftest_" + std::to_string(std::random_device{}()));
  std::string first;
  std::string detail = "poses.jsonl identical for batch_max 1 and 8";
  bool ok = true;
  try {
    for (uint32_t b : {1u, 8u}) {
      PipelineConfig cfg;
      cfg.topology = topology_path;
      cfg.input_w = 320;
      cfg.input_h = 192;
      cfg.frames = 24;
      cfg.backend.seed = 5;
      cfg.scheduler = {true, b, 0};
      cfg.out_dir = (root / std::to_string(b)).string();
      run_pose_pipeline(cfg);
      const std::string text = slurp(root / std::to_string(b) / "poses.jsonl");
      if (b == 1) {
        first = text;
      } else if (text != first || first.empty()) {
        ok = false;
        detail = "poses.jsonl differs between batch_max 1 and 8";
      }
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = describe_exception(e);
  }
  std::error_code ec;
  std::filesystem::remove_all(root, ec);
  return {"batch_invariance", ok, detail};
}

inline CheckResult check_throughput_model() {
  BenchProfile p;
  p.frames = 500;
  p.stages = {{"resize", false, 4000, 0, 0}, {"infer", true, 0, 8000, 1000}, {"post", false, 6000, 0, 0}};
  double worst = 0;
  for (bool sequential : {false, true}) {
    BenchConfig c{"b1", SchedulerPolicy{true, 1, 0}, sequential, {}};
    const double sim = simulate_policy(p, c).fps;
    const double closed = predict_throughput(p, c).config_fps;
    worst = std::max(worst, std::abs(sim / closed - 1.0));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "simulator vs closed form at batch_max 1: %.3f%%", 100.0 * worst);
  return {"throughput_model", worst <= 0.01, buf};
}

}  // namespace detail

inline std::vector<CheckResult> run_selftest(const std::string& topology_path, uint64_t seed = 1) {
  std::vector<CheckResult> out;
  auto guarded = [&](const std::string& name, const std::function<CheckResult()>& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, describe_exception(e)});
    }
  };
  std::optional<SkeletonTopology> topo;
  try {
    topo = load_topology(topology_path);
    out.push_back({"topology", true,
                   topo->name() + ": " + std::to_string(topo->keypoint_count()) + " keypoints, " +
                       std::to_string(topo->limb_count()) + " limbs"});
  } catch (const std::exception& e) {
    out.push_back({"topology", false, describe_exception(e)});
  }
  guarded("hpt1_roundtrip", [&] { return detail::check_hpt1(seed); });
  guarded("ppm_roundtrip", [&] { return detail::check_ppm(seed); });
  guarded("nms_oracle", [&] { return detail::check_nms(seed); });
  guarded("score_limb_constant", [&] { return detail::check_score_limb(seed); });
  if (topo) {
    guarded("render_parse_recovery", [&] { return detail::check_recovery(*topo, seed); });
    guarded("batch_invariance", [&] { return detail::check_batch_invariance(topology_path); });
  } else {
    out.push_back({"render_parse_recovery", false, "skipped: topology did not load"});
    out.push_back({"batch_invariance", false, "skipped: topology did not load"});
  }
  guarded("throughput_model", [] { return detail::check_throughput_model(); });
  return out;
}

}  // namespace poseflow
