// SPDX-License-Identifier: Apache-2.0
#pragma once

// One poses.jsonl record per frame:
// {"frame_id":N,"humans":[{"score":f,"keypoints":[{"part":"nose","x":f,"y":f,"score":f},...]}]}
// Floats use the shortest text that reads back to the same f32.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"

namespace poseflow {

namespace detail {

inline void append_float(std::string& out, float v) {
  if (!std::isfinite(v)) throw ContractError("pose values must be finite for JSON export");
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

inline void append_json_string(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char esc[8];
          std::snprintf(esc, sizeof(esc), "\\u%04x", c);
          out += esc;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

}  // namespace detail

// Without the trailing newline.
inline std::string pose_record_json(uint64_t frame_id, const std::vector<HumanPose>& humans,
                                    const SkeletonTopology& topo) {
  std::string out = "{\"frame_id\":" + std::to_string(frame_id) + ",\"humans\":[";
  for (size_t h = 0; h < humans.size(); ++h) {
    const auto& pose = humans[h];
    if (h) out += ',';
    out += "{\"score\":";
    detail::append_float(out, pose.score);
    out += ",\"keypoints\":[";
    bool first = true;
    for (uint32_t k = 0; k < pose.keypoints.size(); ++k) {
      if (!pose.keypoints[k]) continue;
      if (k >= topo.keypoint_count()) throw ContractError("pose has more keypoints than the topology");
      if (!first) out += ',';
      first = false;
      const auto& kp = *pose.keypoints[k];
      out += "{\"part\":";
      detail::append_json_string(out, topo.keypoint_names()[k]);
      out += ",\"x\":";
      detail::append_float(out, kp.x);
      out += ",\"y\":";
      detail::append_float(out, kp.y);
      out += ",\"score\":";
      detail::append_float(out, kp.score);
      out += '}';
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

}  // namespace poseflow
