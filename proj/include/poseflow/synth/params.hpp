// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "poseflow/core/error.hpp"

namespace poseflow {

// Rendering parameters of the synthetic backend plus its device latency
// model. A batch of B frames takes service_delay_us + batch_overhead_us +
// B * per_item_us of wall time.
struct SynthParams {
  float sigma_conf = 2.0f;     // feature cells
  float paf_halfwidth = 1.0f;  // feature cells
  uint32_t stride = 8;
  uint32_t service_delay_us = 0;
  uint32_t batch_overhead_us = 0;
  uint32_t per_item_us = 0;

  uint64_t latency_us(uint64_t batch) const {
    return uint64_t{service_delay_us} + batch_overhead_us + batch * per_item_us;
  }

  void validate() const {
    if (!(sigma_conf > 0.0f)) throw ConfigError("synth.sigma_conf must be > 0");
    if (!(paf_halfwidth > 0.0f)) throw ConfigError("synth.paf_halfwidth must be > 0");
    if (stride == 0) throw ConfigError("synth.stride must be >= 1");
  }

  friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

}  // namespace poseflow
