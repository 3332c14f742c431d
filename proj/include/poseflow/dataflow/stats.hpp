// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace poseflow {

struct OperatorStats {
  std::string name;
  uint64_t items_in = 0;
  uint64_t items_out = 0;
  uint64_t busy_ns = 0;
  uint64_t idle_ns = 0;  // blocked on an empty input or a full output
  uint64_t park_count = 0;
};

struct EdgeStats {
  std::string from;
  std::string to;
  uint32_t capacity = 0;
  uint32_t max_depth = 0;
  std::vector<uint64_t> depth_histogram;  // index = occupancy after a send
};

struct PipelineStats {
  std::vector<OperatorStats> operators;
  std::vector<EdgeStats> edges;
  uint64_t frames_in = 0;   // emitted by the source
  uint64_t frames_out = 0;  // consumed by the sink
  uint64_t wall_ns = 0;
  double fps = 0;
  uint64_t latency_p50_ns = 0;
  uint64_t latency_p95_ns = 0;
  uint64_t latency_p99_ns = 0;
  std::vector<uint64_t> batch_histogram;  // index = dispatched batch size
  bool ordered = true;  // sink seq_ids strictly increasing
  bool aborted = false;
  std::string error;

  uint64_t max_edge_depth() const {
    uint64_t m = 0;
    for (const auto& e : edges) m = std::max<uint64_t>(m, e.max_depth);
    return m;
  }

  bool depth_within_capacity() const {
    return std::all_of(edges.begin(), edges.end(), [](const EdgeStats& e) { return e.max_depth <= e.capacity; });
  }

  // items_out of each stage equals items_in of the next.
  bool conserved() const {
    for (size_t n = 0; n + 1 < operators.size(); ++n) {
      if (operators[n].items_out != operators[n + 1].items_in) return false;
    }
    return frames_in == frames_out;
  }
};

// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
inline uint64_t percentile(std::vector<uint64_t> sample, double p) {
  if (sample.empty()) return 0;
  std::sort(sample.begin(), sample.end());
  auto rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(sample.size())));
  return sample[std::clamp<size_t>(rank, 1, sample.size()) - 1];
}

inline nlohmann::ordered_json to_json(const PipelineStats& s) {
  nlohmann::ordered_json j;
  j["frames_in"] = s.frames_in;
  j["frames_out"] = s.frames_out;
  j["wall_ns"] = s.wall_ns;
  j["fps"] = s.fps;
  j["latency_ns"] = {{"p50", s.latency_p50_ns}, {"p95", s.latency_p95_ns}, {"p99", s.latency_p99_ns}};
  j["ordered"] = s.ordered;
  j["aborted"] = s.aborted;
  if (!s.error.empty()) j["error"] = s.error;
  j["batch_histogram"] = s.batch_histogram;
  auto& ops = j["operators"] = nlohmann::ordered_json::array();
  for (const auto& o : s.operators) {
    ops.push_back({{"name", o.name},
                   {"items_in", o.items_in},
                   {"items_out", o.items_out},
                   {"busy_ns", o.busy_ns},
                   {"idle_ns", o.idle_ns},
                   {"park_count", o.park_count}});
  }
  auto& edges = j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : s.edges) {
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"capacity", e.capacity},
                     {"max_depth", e.max_depth},
                     {"depth_histogram", e.depth_histogram}});
  }
  return j;
}

}  // namespace poseflow
