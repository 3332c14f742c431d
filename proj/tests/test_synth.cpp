// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "poseflow/synth/backend.hpp"
#include "poseflow/synth/render.hpp"
#include "poseflow/synth/scene.hpp"
#include "test_util.hpp"

namespace poseflow {
namespace {

using testing_util::coco18;
using testing_util::pair_topology;

GroundTruthScene empty_scene(uint32_t w = 128, uint32_t h = 96) { return GroundTruthScene{{}, w, h, 0}; }

// Ground truth keypoint placed on the center of feature cell (i, j).
Point2f at_cell(float i, float j, uint32_t stride = 8) { return {cell_to_pixel(j, stride), cell_to_pixel(i, stride)}; }

TEST(Render, EmptySceneIsBackgroundOnly) {
  auto topo = coco18();
  FeatureMaps maps = render_feature_maps(empty_scene(), topo, SynthParams{});
  EXPECT_EQ(maps.conf.dims(), (std::vector<uint32_t>{19, 12, 16}));
  EXPECT_EQ(maps.paf.dims(), (std::vector<uint32_t>{38, 12, 16}));
  for (uint32_t k = 0; k < 18; ++k) {
    for (float v : maps.conf.slice(k)) EXPECT_EQ(v, 0.0f);
  }
  for (float v : maps.conf.slice(18)) EXPECT_EQ(v, 1.0f);
  for (float v : maps.paf.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Render, GaussianPeaksAtCellCenter) {
  auto topo = pair_topology();
  GroundTruthScene scene = empty_scene();
  scene.humans.push_back({{at_cell(5, 5), std::nullopt}});
  FeatureMaps maps = render_feature_maps(scene, topo, SynthParams{});
  EXPECT_EQ(maps.conf.at(0, 5, 5), 1.0f);
  for (uint32_t i = 0; i < maps.height(); ++i) {
    for (uint32_t j = 0; j < maps.width(); ++j) {
      if (i != 5 || j != 5) {
        EXPECT_LT(maps.conf.at(0, i, j), 1.0f);
      }
    }
  }
  EXPECT_EQ(maps.conf.at(2, 5, 5), 0.0f);  // background
}

TEST(Render, HorizontalLimbIsUnitX) {
  auto topo = pair_topology();
  GroundTruthScene scene = empty_scene();
  scene.humans.push_back({{at_cell(4, 2), at_cell(4, 10)}});
  FeatureMaps maps = render_feature_maps(scene, topo, SynthParams{});
  for (uint32_t j = 2; j <= 10; ++j) {
    EXPECT_EQ(maps.paf.at(0, 4, j), 1.0f) << j;
    EXPECT_EQ(maps.paf.at(1, 4, j), 0.0f) << j;
  }
  // halfwidth 1: rows 3 and 5 are inside the corridor, rows 2 and 6 are not.
  EXPECT_EQ(maps.paf.at(0, 3, 6), 1.0f);
  EXPECT_EQ(maps.paf.at(0, 6, 6), 0.0f);
  EXPECT_EQ(maps.paf.at(0, 4, 12), 0.0f);
}

TEST(Render, OverlappingLimbsAverage) {
  auto topo = pair_topology();
  GroundTruthScene scene = empty_scene();
  scene.humans.push_back({{at_cell(4, 2), at_cell(4, 10)}});   // +x
  scene.humans.push_back({{at_cell(2, 6), at_cell(10, 6)}});   // +y, crosses at (4, 6)
  FeatureMaps maps = render_feature_maps(scene, topo, SynthParams{});
  EXPECT_FLOAT_EQ(maps.paf.at(0, 4, 6), 0.5f);
  EXPECT_FLOAT_EQ(maps.paf.at(1, 4, 6), 0.5f);
  EXPECT_EQ(maps.paf.at(0, 4, 3), 1.0f);
}

TEST(Render, RejectsOutOfBoundsKeypoint) {
  auto topo = pair_topology();
  GroundTruthScene scene = empty_scene();
  scene.humans.push_back({{Point2f{128.0f, 10.0f}, std::nullopt}});
  EXPECT_THROW(render_feature_maps(scene, topo, SynthParams{}), ContractError);
  scene.humans[0].keypoints[0] = Point2f{-0.5f, 10.0f};
  EXPECT_THROW(render_feature_maps(scene, topo, SynthParams{}), ContractError);
}

// Independent statement of the confidence field: every cell, every human,
// no cutoff.
float conf_oracle(const GroundTruthScene& scene, uint32_t k, uint32_t i, uint32_t j, const SynthParams& p) {
  double best = 0;
  for (const auto& h : scene.humans) {
    if (!h.keypoints[k]) continue;
    double cx = (h.keypoints[k]->x + 0.5) / p.stride - 0.5;
    double cy = (h.keypoints[k]->y + 0.5) / p.stride - 0.5;
    double d2 = (j - cx) * (j - cx) + (i - cy) * (i - cy);
    best = std::max(best, std::exp(-d2 / (2.0 * p.sigma_conf * p.sigma_conf)));
  }
  return static_cast<float>(best);
}

TEST(Render, ConfidenceMatchesDirectFormula) {
  auto topo = coco18();
  SynthParams p;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto scene = procedural_scene(seed, 18, 320, 240, p);
    auto maps = render_feature_maps(scene, topo, p);
    for (uint32_t k = 0; k < 18; ++k) {
      for (uint32_t i = 0; i < maps.height(); ++i) {
        for (uint32_t j = 0; j < maps.width(); ++j) {
          ASSERT_NEAR(maps.conf.at(k, i, j), conf_oracle(scene, k, i, j, p), 1e-6) << k << " " << i << " " << j;
        }
      }
    }
  }
}

TEST(Render, ValueRangesOnProceduralScenes) {
  auto topo = coco18();
  SynthParams p;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto maps = render_feature_maps(procedural_scene(scene_seed(1, seed), 18, 640, 360, p), topo, p);
    for (float v : maps.conf.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    for (uint32_t l = 0; l < 19; ++l) {
      auto x = maps.paf.slice(2 * l);
      auto y = maps.paf.slice(2 * l + 1);
      for (size_t c = 0; c < x.size(); ++c) ASSERT_LE(std::hypot(x[c], y[c]), 1.0f + 1e-6f);
    }
  }
}

TEST(Procedural, DeterministicSeparatedAndInBounds) {
  SynthParams p;
  std::map<size_t, int> sizes;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    auto a = procedural_scene(seed, 18, 640, 360, p);
    EXPECT_EQ(a, procedural_scene(seed, 18, 640, 360, p));
    ASSERT_GE(a.humans.size(), 1u);
    ASSERT_LE(a.humans.size(), 5u);
    sizes[a.humans.size()]++;
    EXPECT_NO_THROW(a.validate(18));
    for (size_t x = 0; x < a.humans.size(); ++x) {
      for (size_t y = x + 1; y < a.humans.size(); ++y) {
        EXPECT_TRUE(humans_separated(a.humans[x], a.humans[y], separation_px(p), 16.0f));
      }
    }
  }
  EXPECT_EQ(sizes.size(), 5u);  // every crowd size 1..5 occurs
  EXPECT_THROW(procedural_scene(0, 17, 640, 360, p), ContractError);
}

TEST(Corpus, TomlRoundTrip) {
  SceneCorpus corpus{640, 360, {}};
  for (uint64_t s = 0; s < 3; ++s) corpus.scenes.emplace_back(s, procedural_scene(s, 18, 640, 360, SynthParams{}));
  corpus.scenes[1].second.humans[0].keypoints[3].reset();
  auto dir = testing_util::temp_dir("corpus");
  std::ofstream(dir / "scenes.toml") << corpus_to_toml(corpus);
  SceneCorpus back = load_scene_corpus(dir / "scenes.toml", 18);
  ASSERT_EQ(back.scenes.size(), 3u);
  for (size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(back.scenes[s].first, s);
    EXPECT_EQ(back.scenes[s].second.humans, corpus.scenes[s].second.humans);
  }
}

TEST(Corpus, RejectsBadFiles) {
  auto dir = testing_util::temp_dir("badcorpus");
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "c.toml") << text;
    return dir / "c.toml";
  };
  EXPECT_THROW(load_scene_corpus(dir / "none.toml", 18), ConfigError);
  EXPECT_THROW(load_scene_corpus(write("input_w = 64\n"), 2), ConfigError);
  EXPECT_THROW(load_scene_corpus(write("input_w=64\ninput_h=64\n[[scene]]\n[[scene.human]]\nkeypoints=[[1,2]]\n"), 2),
               ConfigError);
  // out of bounds keypoint
  EXPECT_THROW(load_scene_corpus(write("input_w=64\ninput_h=64\n[[scene]]\n[[scene.human]]\n"
                                       "keypoints=[[1,2],[70,2]]\n"),
                                 2),
               ConfigError);
}

// ---------------------------------------------------------------------------
// Synthetic backend

SynthBackend procedural_backend(SynthParams p = {}, uint32_t w = 320, uint32_t h = 240) {
  return SynthBackend(coco18(), p, w, h, 8, {}, uint64_t{99});
}

TensorF32 blank_batch(uint32_t b, uint32_t w = 320, uint32_t h = 240) { return TensorF32({b, 3, h, w}); }

TEST(SynthBackend, BatchInvariance) {
  auto backend = procedural_backend();
  std::vector<uint64_t> ids = {3, 4, 5, 6};
  auto batched = backend.infer(blank_batch(4), ids);
  ASSERT_EQ(batched.size(), 4u);
  for (size_t b = 0; b < 4; ++b) {
    auto single = backend.infer(blank_batch(1), std::span<const uint64_t>(&ids[b], 1));
    EXPECT_TRUE(single[0] == batched[b]);
    EXPECT_EQ(batched[b].frame_ref, ids[b]);
  }
}

TEST(SynthBackend, LatencyModel) {
  SynthParams p;
  p.batch_overhead_us = 8000;
  p.per_item_us = 1000;
  auto backend = procedural_backend(p);
  std::vector<uint64_t> ids = {0, 1, 2, 3};
  auto t0 = std::chrono::steady_clock::now();
  backend.infer(blank_batch(4), ids);
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(12));
}

TEST(SynthBackend, ProceduralScenesAreSeeded) {
  auto a = procedural_backend();
  auto b = procedural_backend();
  std::vector<uint64_t> ids = {17};
  EXPECT_TRUE(a.infer(blank_batch(1), ids)[0] == b.infer(blank_batch(1), ids)[0]);
  SynthBackend other(coco18(), SynthParams{}, 320, 240, 8, {}, uint64_t{100});
  EXPECT_FALSE(a.infer(blank_batch(1), ids)[0] == other.infer(blank_batch(1), ids)[0]);
}

TEST(SynthBackend, RegisteredScenesAndErrors) {
  std::map<uint64_t, GroundTruthScene> scenes;
  scenes[0] = GroundTruthScene{{}, 320, 240, 0};
  SynthBackend backend(coco18(), SynthParams{}, 320, 240, 2, scenes, std::nullopt);
  std::vector<uint64_t> ok = {0};
  EXPECT_EQ(backend.infer(blank_batch(1), ok).size(), 1u);
  std::vector<uint64_t> unknown = {1};
  try {
    backend.infer(blank_batch(1), unknown);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos);
  }
  std::vector<uint64_t> three = {0, 0, 0};
  EXPECT_THROW(backend.infer(blank_batch(3), three), BackendError);  // over max batch
  EXPECT_THROW(backend.infer(blank_batch(2), ok), BackendError);     // shape mismatch
  scenes[5] = GroundTruthScene{{}, 64, 64, 0};
  EXPECT_THROW(SynthBackend(coco18(), SynthParams{}, 320, 240, 2, scenes, std::nullopt), ConfigError);
}

// ---------------------------------------------------------------------------
// File backend

TEST(FileBackend, ReplaysDumpsBitExact) {
  auto dir = testing_util::temp_dir("dumps");
  auto synth = procedural_backend();
  std::vector<FeatureMaps> dumped;
  for (uint64_t s = 0; s < 10; ++s) {
    auto m = synth.infer(blank_batch(1), std::span<const uint64_t>(&s, 1))[0];
    dump_feature_maps(dir, m);
    dumped.push_back(std::move(m));
  }
  FileBackend replay(dir, coco18(), 8, 8);
  EXPECT_EQ(replay.count_frames(), 10u);
  std::vector<uint64_t> ids = {0, 1, 2, 3, 4, 5, 6, 7};
  auto out = replay.infer(TensorF32({8, 1}), ids);
  for (size_t i = 0; i < ids.size(); ++i) EXPECT_TRUE(out[i] == dumped[ids[i]]) << i;
  EXPECT_TRUE(replay.load(9) == dumped[9]);
}

TEST(FileBackend, MissingFrameNamesSeqId) {
  auto dir = testing_util::temp_dir("dumps_missing");
  auto synth = procedural_backend();
  for (uint64_t s = 0; s < 10; ++s) dump_feature_maps(dir, synth.infer(blank_batch(1), std::span<const uint64_t>(&s, 1))[0]);
  FileBackend replay(dir, coco18(), 8, 8);
  std::vector<uint64_t> ids = {10};
  try {
    replay.infer(TensorF32({1, 1}), ids);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 10"), std::string::npos);
  }
}

TEST(FileBackend, CorruptDumpIsBackendErrorWithFormatCause) {
  auto dir = testing_util::temp_dir("dumps_corrupt");
  std::ofstream(dump_path(dir, 0), std::ios::binary) << "HPT0garbage";
  FileBackend replay(dir, coco18(), 8, 8);
  std::vector<uint64_t> ids = {0};
  try {
    replay.infer(TensorF32({1, 1}), ids);
    FAIL();
  } catch (const BackendError& e) {
    bool nested_format = false;
    try {
      std::rethrow_if_nested(e);
    } catch (const FormatError&) {
      nested_format = true;
    }
    EXPECT_TRUE(nested_format);
    EXPECT_NE(describe_exception(e).find("bad HPT1 magic"), std::string::npos);
  }
  EXPECT_THROW(FileBackend(dir / "nope", coco18(), 8, 8), ConfigError);
}

}  // namespace
}  // namespace poseflow
