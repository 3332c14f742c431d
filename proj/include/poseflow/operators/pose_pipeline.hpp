// SPDX-License-Identifier: Apache-2.0
#pragma once

// The five-operator pose pipeline: decode -> resize -> infer -> parse ->
// visualize, plus its sources and file outputs.
//
// "Decode" reads PPM frames (or makes blank frames for synthetic runs) and
// normalizes them to [0, 1]; there is no video codec.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "poseflow/core/config.hpp"
#include "poseflow/core/error.hpp"
#include "poseflow/core/formats.hpp"
#include "poseflow/core/tensor.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"
#include "poseflow/dataflow/pipeline.hpp"
#include "poseflow/operators/pose_json.hpp"
#include "poseflow/operators/resize.hpp"
#include "poseflow/operators/visualize.hpp"
#include "poseflow/parser/paf_parser.hpp"
#include "poseflow/scheduler/batch_slot.hpp"
#include "poseflow/synth/backend.hpp"
#include "poseflow/synth/scene.hpp"

namespace poseflow {

struct PoseRecord {
  uint64_t seq_id = 0;
  uint64_t ingest_ns = 0;
  TensorF32 image;  // original frame [H, W, 3]; dropped after resize unless overlays are on
  uint32_t orig_w = 0;
  uint32_t orig_h = 0;
  TensorF32 input;  // [3, input_h, input_w]; dropped after inference
  std::optional<FeatureMaps> maps;
  std::vector<HumanPose> humans;
};

// ---------------------------------------------------------------------------
// Sources

using FrameLoader = std::function<TensorF32(uint64_t seq_id)>;

struct FrameSource {
  uint64_t count = 0;
  FrameLoader load;
};

inline std::vector<std::filesystem::path> list_ppm_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("input directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline FrameSource ppm_dir_source(const std::filesystem::path& dir) {
  auto files = std::make_shared<std::vector<std::filesystem::path>>(list_ppm_files(dir));
  return {files->size(), [files](uint64_t seq) { return load_ppm((*files)[seq]); }};
}

inline FrameSource blank_source(uint64_t count, uint32_t w, uint32_t h) {
  return {count, [w, h](uint64_t) { return TensorF32({h, w, 3}); }};
}

// Emits records 0..limit-1; each frame takes at least latency_us.
inline OperatorSpec<PoseRecord> decode_op(FrameSource src, uint64_t limit, uint32_t latency_us) {
  auto next = std::make_shared<uint64_t>(0);
  const uint64_t n = limit ? std::min(limit, src.count) : src.count;
  return make_source<PoseRecord>("decode", [src = std::move(src), next, n,
                                            latency_us](OperatorContext&) -> std::optional<PoseRecord> {
    if (*next >= n) return std::nullopt;
    const auto t0 = std::chrono::steady_clock::now();
    PoseRecord rec;
    rec.seq_id = (*next)++;
    rec.image = src.load(rec.seq_id);
    if (rec.image.rank() != 3 || rec.image.dim(2) != 3) throw ContractError("frames must be [H, W, 3]");
    rec.orig_h = rec.image.dim(0);
    rec.orig_w = rec.image.dim(1);
    if (latency_us > 0) std::this_thread::sleep_until(t0 + std::chrono::microseconds(latency_us));
    return rec;
  });
}

// ---------------------------------------------------------------------------
// Transforms

inline OperatorSpec<PoseRecord> resize_op(uint32_t input_w, uint32_t input_h, bool keep_image) {
  return make_map<PoseRecord>("resize", [=](PoseRecord&& rec, OperatorContext&) {
    rec.input = resize_to_chw(rec.image, input_h, input_w);
    if (!keep_image) rec.image = TensorF32();
    return std::move(rec);
  });
}

inline OperatorSpec<PoseRecord> infer_op(std::shared_ptr<InferenceBackend> backend, SchedulerPolicy policy) {
  return make_batched<PoseRecord>("infer", policy, [backend](std::vector<PoseRecord>&& batch) {
    const auto& in0 = batch.front().input;
    std::vector<uint32_t> dims = {static_cast<uint32_t>(batch.size())};
    dims.insert(dims.end(), in0.dims().begin(), in0.dims().end());
    TensorF32 stacked(dims);
    auto& dst = stacked.values();
    std::vector<uint64_t> seqs;
    for (size_t b = 0; b < batch.size(); ++b) {
      const auto& in = batch[b].input;
      if (in.dims() != in0.dims()) throw ContractError("inputs of one batch differ in shape");
      std::copy(in.data().begin(), in.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(b * in.size()));
      seqs.push_back(batch[b].seq_id);
    }
    auto maps = backend->infer(stacked, seqs);
    if (maps.size() != batch.size()) {
      batch.resize(std::min(maps.size(), batch.size()));  // split_batch_results reports the mismatch
    }
    for (size_t b = 0; b < batch.size(); ++b) {
      batch[b].maps = std::move(maps[b]);
      batch[b].input = TensorF32();
    }
    return std::move(batch);
  });
}

inline OperatorSpec<PoseRecord> parse_op(SkeletonTopology topo, ParserParams params, std::string dump_dir) {
  return make_map<PoseRecord>("parse", [topo = std::move(topo), params, dump_dir](PoseRecord&& rec, OperatorContext&) {
    if (!rec.maps) throw ContractError("frame " + std::to_string(rec.seq_id) + " reached parse without maps");
    if (!dump_dir.empty()) dump_feature_maps(dump_dir, *rec.maps);
    rec.humans = parse(*rec.maps, topo, params);
    rec.maps.reset();
    return std::move(rec);
  });
}

// ---------------------------------------------------------------------------
// Outputs

inline std::filesystem::path overlay_path(const std::filesystem::path& dir, uint64_t seq) {
  return dir / ("frame_" + std::to_string(seq) + ".ppm");
}

// poses.jsonl and optional overlays. Opened before the pipeline starts so
// an unusable output directory fails early.
class PoseWriter {
 public:
  PoseWriter(const std::filesystem::path& dir, SkeletonTopology topo, bool overlay, OverlayStyle style,
             uint32_t input_w, uint32_t input_h)
      : dir_(dir), topo_(std::move(topo)), overlay_(overlay), style_(style), input_w_(input_w), input_h_(input_h) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) {
      throw ConfigError("cannot create output directory " + dir_.string() + (ec ? ": " + ec.message() : ""));
    }
    jsonl_.open(dir_ / "poses.jsonl", std::ios::binary | std::ios::trunc);
    if (!jsonl_) throw ConfigError("cannot write " + (dir_ / "poses.jsonl").string());
  }

  void write(const PoseRecord& rec) {
    jsonl_ << pose_record_json(rec.seq_id, rec.humans, topo_) << '\n';
    if (!jsonl_) throw FormatError("write failed: " + (dir_ / "poses.jsonl").string());
    if (overlay_) {
      const float sx = static_cast<float>(rec.orig_w) / static_cast<float>(input_w_);
      const float sy = static_cast<float>(rec.orig_h) / static_cast<float>(input_h_);
      save_ppm(draw_overlay(rec.image, rec.humans, topo_, style_, sx, sy), overlay_path(dir_, rec.seq_id));
    }
  }

  void flush() { jsonl_.flush(); }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  SkeletonTopology topo_;
  bool overlay_;
  OverlayStyle style_;
  uint32_t input_w_;
  uint32_t input_h_;
  std::ofstream jsonl_;
};

inline OperatorSpec<PoseRecord> visualize_op(std::shared_ptr<PoseWriter> writer) {
  return make_sink<PoseRecord>("visualize", [writer](PoseRecord&& rec, OperatorContext&) { writer->write(rec); });
}

inline void write_stats_json(const std::filesystem::path& path, const PipelineStats& stats) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << to_json(stats).dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Assembly

struct PoseRunSetup {
  SkeletonTopology topo;
  std::shared_ptr<InferenceBackend> backend;
  FrameSource source;
};

// Resolves topology, backend and frame source; every problem here is a
// ConfigError and nothing has been written yet.
inline PoseRunSetup prepare_pose_run(const PipelineConfig& cfg) {
  cfg.validate();
  SkeletonTopology topo = load_topology(cfg.topology);
  std::shared_ptr<InferenceBackend> backend;
  std::optional<uint64_t> frames;

  if (cfg.backend.kind == BackendKind::synthetic) {
    std::map<uint64_t, GroundTruthScene> scenes;
    std::optional<uint64_t> seed;
    if (!cfg.backend.path.empty()) {
      SceneCorpus corpus = load_scene_corpus(cfg.backend.path, topo.keypoint_count());
      if (corpus.input_w != cfg.input_w || corpus.input_h != cfg.input_h) {
        throw ConfigError("scene corpus is " + std::to_string(corpus.input_w) + "x" + std::to_string(corpus.input_h) +
                          " but the pipeline input is " + std::to_string(cfg.input_w) + "x" +
                          std::to_string(cfg.input_h));
      }
      for (auto& [seq, scene] : corpus.scenes) scenes.emplace(seq, std::move(scene));
      for (uint64_t i = 0; i < scenes.size(); ++i) {
        if (!scenes.count(i)) throw ConfigError("scene corpus seq_ids must be 0..N-1; missing " + std::to_string(i));
      }
      frames = scenes.size();
    } else {
      if (topo.keypoint_count() != 18) throw ConfigError("procedural scenes need the 18-keypoint coco18 topology");
      seed = cfg.backend.seed;
    }
    backend = std::make_shared<SynthBackend>(topo, cfg.synth, cfg.input_w, cfg.input_h, cfg.backend.max_batch,
                                             std::move(scenes), seed);
  } else {
    auto file = std::make_shared<FileBackend>(cfg.backend.path, topo, cfg.stride(), cfg.backend.max_batch);
    frames = file->count_frames();
    if (*frames == 0) throw ConfigError("no feature-map dumps in " + cfg.backend.path);
    backend = std::move(file);
  }

  FrameSource source;
  if (!cfg.input_dir.empty()) {
    source = ppm_dir_source(cfg.input_dir);
    if (source.count == 0) throw ConfigError("no .ppm files in " + cfg.input_dir);
    if (frames) source.count = std::min(source.count, *frames);
  } else {
    if (!frames && cfg.frames == 0) throw ConfigError("procedural scenes need pipeline.frames > 0");
    source = blank_source(frames.value_or(cfg.frames), cfg.input_w, cfg.input_h);
  }
  return {std::move(topo), std::move(backend), std::move(source)};
}

inline PipelineGraph<PoseRecord> build_pose_pipeline(const PipelineConfig& cfg, PoseRunSetup setup,
                                                     std::shared_ptr<PoseWriter> writer) {
  return build_pipeline<PoseRecord>(
      cfg, {decode_op(std::move(setup.source), cfg.frames, cfg.source_latency_us),
            resize_op(cfg.input_w, cfg.input_h, cfg.overlay), infer_op(std::move(setup.backend), cfg.scheduler),
            parse_op(setup.topo, cfg.parser, cfg.dump_maps), visualize_op(std::move(writer))});
}

struct PoseRunOptions {
  std::stop_token stop;
  uint32_t max_in_flight = 0;
  OverlayStyle style;
};

// Full run: outputs go to cfg.out_dir (poses.jsonl, stats.json, overlays).
// stats.json is written even when the pipeline aborts.
inline PipelineStats run_pose_pipeline(const PipelineConfig& cfg, const PoseRunOptions& opts = {}) {
  PoseRunSetup setup = prepare_pose_run(cfg);
  opts.style.validate();
  if (!cfg.dump_maps.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.dump_maps, ec);
    if (ec) throw ConfigError("cannot create dump directory " + cfg.dump_maps + ": " + ec.message());
  }
  auto writer = std::make_shared<PoseWriter>(cfg.out_dir, setup.topo, cfg.overlay, opts.style, cfg.input_w,
                                             cfg.input_h);
  auto graph = build_pose_pipeline(cfg, std::move(setup), writer);
  RunOptions run;
  run.stop = opts.stop;
  run.max_in_flight = opts.max_in_flight;
  if (cfg.progress) run.progress = &std::cerr;
  try {
    PipelineStats stats = run_pipeline(graph, run);
    writer->flush();
    write_stats_json(writer->dir() / "stats.json", stats);
    return stats;
  } catch (const PipelineAborted& e) {
    writer->flush();
    write_stats_json(writer->dir() / "stats.json", e.stats());
    throw;
  }
}

}  // namespace poseflow
