// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "poseflow/core/error.hpp"

namespace poseflow {

struct ParserParams {
  float conf_threshold = 0.10f;
  uint32_t nms_window = 3;  // odd, >= 3
  uint32_t n_samples = 10;
  float sample_dot_threshold = 0.05f;
  float good_fraction_min = 0.8f;
  uint32_t min_parts = 4;
  float min_human_score = 0.2f;

  void validate() const {
    auto unit = [](float v, const char* key) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError(std::string("parser.") + key + " must be in [0, 1]");
    };
    unit(conf_threshold, "conf_threshold");
    unit(sample_dot_threshold, "sample_dot_threshold");
    unit(good_fraction_min, "good_fraction_min");
    unit(min_human_score, "min_human_score");
    if (nms_window < 3 || nms_window % 2 == 0) throw ConfigError("parser.nms_window must be odd and >= 3");
    if (n_samples < 2) throw ConfigError("parser.n_samples must be >= 2");
    if (min_parts < 1) throw ConfigError("parser.min_parts must be >= 1");
  }

  friend bool operator==(const ParserParams&, const ParserParams&) = default;
};

}  // namespace poseflow
