// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "poseflow/core/error.hpp"

namespace poseflow {

struct SchedulerPolicy {
  bool enabled = true;
  uint32_t batch_max = 8;
  uint32_t linger_us = 0;

  // What the batch slot actually applies: a disabled scheduler dispatches
  // single items without lingering.
  uint32_t effective_batch_max() const { return enabled ? batch_max : 1; }
  uint32_t effective_linger_us() const { return enabled ? linger_us : 0; }

  void validate() const {
    if (batch_max < 1) throw ConfigError("scheduler.batch_max must be >= 1");
  }

  friend bool operator==(const SchedulerPolicy&, const SchedulerPolicy&) = default;
};

}  // namespace poseflow
