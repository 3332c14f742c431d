// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/formats.hpp"
#include "poseflow/core/tensor.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"
#include "poseflow/synth/params.hpp"
#include "poseflow/synth/render.hpp"
#include "poseflow/synth/scene.hpp"

namespace poseflow {

// What the inference operator drives. `batch` is [B, 3, H, W] and
// `seq_ids[b]` names the frame in slot b. Must return exactly B maps, in
// slot order.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual uint32_t max_batch() const = 0;
  virtual std::vector<FeatureMaps> infer(const TensorF32& batch, std::span<const uint64_t> seq_ids) = 0;
};

inline void check_batch_shape(const TensorF32& batch, std::span<const uint64_t> seq_ids, uint32_t max_batch,
                              uint32_t input_w, uint32_t input_h) {
  if (seq_ids.empty()) throw BackendError("empty batch");
  if (batch.rank() != 4 || batch.dim(0) != seq_ids.size() || batch.dim(1) != 3 || batch.dim(2) != input_h ||
      batch.dim(3) != input_w) {
    throw BackendError("batch tensor does not match [B, 3, " + std::to_string(input_h) + ", " +
                       std::to_string(input_w) + "] for " + std::to_string(seq_ids.size()) + " frames");
  }
  if (seq_ids.size() > max_batch) {
    throw BackendError("batch of " + std::to_string(seq_ids.size()) + " exceeds backend max " +
                       std::to_string(max_batch));
  }
}

// Blocks until `start + latency_us(batch)` so a call's wall time follows the
// latency model regardless of how long the real work took.
inline void emulate_device_latency(std::chrono::steady_clock::time_point start, const SynthParams& p,
                                   uint64_t batch) {
  const uint64_t us = p.latency_us(batch);
  if (us > 0) std::this_thread::sleep_until(start + std::chrono::microseconds(us));
}

// Renders maps from registered ground-truth scenes, falling back to seeded
// procedural scenes when `procedural_seed` is set.
class SynthBackend final : public InferenceBackend {
 public:
  SynthBackend(SkeletonTopology topo, SynthParams params, uint32_t input_w, uint32_t input_h, uint32_t max_batch,
               std::map<uint64_t, GroundTruthScene> scenes, std::optional<uint64_t> procedural_seed)
      : topo_(std::move(topo)),
        params_(params),
        input_w_(input_w),
        input_h_(input_h),
        max_batch_(max_batch),
        scenes_(std::move(scenes)),
        procedural_seed_(procedural_seed) {
    params_.validate();
    for (const auto& [seq, scene] : scenes_) {
      if (scene.input_w != input_w_ || scene.input_h != input_h_) {
        throw ConfigError("scene " + std::to_string(seq) + " is " + std::to_string(scene.input_w) + "x" +
                          std::to_string(scene.input_h) + " but the network input is " +
                          std::to_string(input_w_) + "x" + std::to_string(input_h_));
      }
    }
  }

  uint32_t max_batch() const override { return max_batch_; }
  const SynthParams& params() const { return params_; }

  GroundTruthScene scene_for(uint64_t seq_id) const {
    if (auto it = scenes_.find(seq_id); it != scenes_.end()) return it->second;
    if (procedural_seed_) {
      return procedural_scene(scene_seed(*procedural_seed_, seq_id), topo_.keypoint_count(), input_w_, input_h_,
                              params_);
    }
    throw BackendError("no scene registered for frame " + std::to_string(seq_id));
  }

  std::vector<FeatureMaps> infer(const TensorF32& batch, std::span<const uint64_t> seq_ids) override {
    const auto start = std::chrono::steady_clock::now();
    check_batch_shape(batch, seq_ids, max_batch_, input_w_, input_h_);
    std::vector<FeatureMaps> out;
    out.reserve(seq_ids.size());
    for (uint64_t seq : seq_ids) out.push_back(render_feature_maps(scene_for(seq), topo_, params_, seq));
    emulate_device_latency(start, params_, seq_ids.size());
    return out;
  }

 private:
  SkeletonTopology topo_;
  SynthParams params_;
  uint32_t input_w_;
  uint32_t input_h_;
  uint32_t max_batch_;
  std::map<uint64_t, GroundTruthScene> scenes_;
  std::optional<uint64_t> procedural_seed_;
};

// ---------------------------------------------------------------------------
// HPT1 map dumps: one file per frame, conf and paf stacked along the channel
// axis as [K+1+2L, H', W'].

inline std::filesystem::path dump_path(const std::filesystem::path& dir, uint64_t seq_id) {
  char name[40];
  std::snprintf(name, sizeof(name), "maps_%08llu.hpt", static_cast<unsigned long long>(seq_id));
  return dir / name;
}

inline void dump_feature_maps(const std::filesystem::path& dir, const FeatureMaps& maps) {
  const uint32_t rows = maps.height();
  const uint32_t cols = maps.width();
  const uint32_t channels = maps.conf.dim(0) + maps.paf.dim(0);
  std::vector<float> data(maps.conf.values());
  data.insert(data.end(), maps.paf.values().begin(), maps.paf.values().end());
  save_tensor(TensorF32({channels, rows, cols}, std::move(data)), dump_path(dir, maps.frame_ref));
}

// Replays maps dumped by dump_feature_maps.
class FileBackend final : public InferenceBackend {
 public:
  FileBackend(std::filesystem::path dir, SkeletonTopology topo, uint32_t stride, uint32_t max_batch)
      : dir_(std::move(dir)), topo_(std::move(topo)), stride_(stride), max_batch_(max_batch) {
    if (!std::filesystem::is_directory(dir_)) throw ConfigError("dump directory not found: " + dir_.string());
  }

  uint32_t max_batch() const override { return max_batch_; }

  // Number of consecutive dumps maps_00000000.hpt, maps_00000001.hpt, ...
  uint64_t count_frames() const {
    uint64_t n = 0;
    while (std::filesystem::exists(dump_path(dir_, n))) ++n;
    return n;
  }

  FeatureMaps load(uint64_t seq_id) const {
    const auto path = dump_path(dir_, seq_id);
    if (!std::filesystem::exists(path)) {
      throw BackendError("no dumped maps for frame " + std::to_string(seq_id) + " (" + path.string() + ")");
    }
    TensorF32 stacked;
    try {
      stacked = load_tensor(path);
    } catch (const Error&) {
      std::throw_with_nested(BackendError("cannot replay maps for frame " + std::to_string(seq_id)));
    }
    const uint32_t k1 = topo_.keypoint_count() + 1;
    const uint32_t l2 = 2 * topo_.limb_count();
    if (stacked.rank() != 3 || stacked.dim(0) != k1 + l2) {
      throw BackendError("dumped maps for frame " + std::to_string(seq_id) + " do not match the topology");
    }
    const uint32_t rows = stacked.dim(1);
    const uint32_t cols = stacked.dim(2);
    const size_t plane = size_t{rows} * cols;
    const auto& v = stacked.values();
    FeatureMaps maps;
    maps.stride = stride_;
    maps.frame_ref = seq_id;
    maps.conf = TensorF32({k1, rows, cols}, std::vector<float>(v.begin(), v.begin() + static_cast<ptrdiff_t>(k1 * plane)));
    maps.paf = TensorF32({l2, rows, cols}, std::vector<float>(v.begin() + static_cast<ptrdiff_t>(k1 * plane), v.end()));
    return maps;
  }

  // The batch tensor is ignored beyond its batch extent: replay is keyed by
  // seq_id only.
  std::vector<FeatureMaps> infer(const TensorF32& batch, std::span<const uint64_t> seq_ids) override {
    if (seq_ids.empty()) throw BackendError("empty batch");
    if (batch.rank() < 1 || batch.dim(0) != seq_ids.size()) throw BackendError("batch extent mismatch");
    if (seq_ids.size() > max_batch_) throw BackendError("batch exceeds backend max");
    std::vector<FeatureMaps> out;
    for (uint64_t seq : seq_ids) out.push_back(load(seq));
    return out;
  }

 private:
  std::filesystem::path dir_;
  SkeletonTopology topo_;
  uint32_t stride_;
  uint32_t max_batch_;
};

}  // namespace poseflow
