// SPDX-License-Identifier: Apache-2.0
#pragma once

// Adaptive batching in front of a batched operator.
//
// The operator's worker accumulates items into `pending` (at most batch_max)
// while a device thread runs the batch function. When the device is idle it
// takes whatever is pending right away, so a lone frame is never delayed;
// while it is busy, arrivals pile up and the next dispatch takes up to
// batch_max of them. With linger_us > 0 an idle device instead waits up to
// linger_us after the first pending item for a full batch.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/types.hpp"
#include "poseflow/dataflow/pipeline.hpp"
#include "poseflow/scheduler/parker.hpp"
#include "poseflow/scheduler/policy.hpp"

namespace poseflow {

// Puts batch outputs back in ascending seq_id order after checking that the
// backend answered every input exactly once.
template <PipelineItem T>
std::vector<T> split_batch_results(std::vector<T> outputs, std::span<const uint64_t> seq_ids) {
  auto frames = [&] {
    std::string s;
    for (size_t n = 0; n < seq_ids.size(); ++n) s += (n ? "," : "") + std::to_string(seq_ids[n]);
    return s;
  };
  if (outputs.size() != seq_ids.size()) {
    throw BackendError("backend returned " + std::to_string(outputs.size()) + " results for a batch of " +
                       std::to_string(seq_ids.size()) + " (frames " + frames() + ")");
  }
  std::sort(outputs.begin(), outputs.end(), [](const T& a, const T& b) { return a.seq_id < b.seq_id; });
  std::vector<uint64_t> expected(seq_ids.begin(), seq_ids.end());
  std::sort(expected.begin(), expected.end());
  for (size_t n = 0; n < outputs.size(); ++n) {
    if (outputs[n].seq_id != expected[n]) {
      throw BackendError("backend results do not match the batch (frames " + frames() + ")");
    }
  }
  return outputs;
}

template <PipelineItem T>
class BatchSlot {
 public:
  using BatchFn = std::function<std::vector<T>(std::vector<T>&&)>;

  BatchSlot(SchedulerPolicy policy, BatchFn fn)
      : batch_max_(policy.effective_batch_max()),
        linger_(std::chrono::microseconds(policy.effective_linger_us())),
        fn_(std::move(fn)) {
    policy.validate();
  }

  bool busy() const { return busy_.load(std::memory_order_acquire); }
  uint32_t batch_max() const { return batch_max_; }

  void run(Inlet<T>& in, Outlet<T>& out, OperatorContext& ctx) {
    std::thread device([&] { device_loop(out, ctx); });
    try {
      for (;;) {
        bool failed = false;
        parker_.park([&] {
          failed = device_failed_;
          return pending_.size() < batch_max_ || failed;
        });
        if (failed) break;
        auto item = in.receive();
        if (!item) break;
        parker_.notify([&] {
          if (pending_.empty()) first_arrival_ = std::chrono::steady_clock::now();
          pending_.push_back(std::move(*item));
        });
      }
    } catch (...) {
      parker_.notify([&] { stopping_ = true; });
      device.join();
      if (device_error_) std::rethrow_exception(device_error_);
      throw;
    }
    parker_.notify([&] { input_done_ = true; });
    device.join();
    if (device_error_) std::rethrow_exception(device_error_);
  }

 private:
  void device_loop(Outlet<T>& out, OperatorContext& ctx) {
    uint64_t busy_ns = 0;
    try {
      for (;;) {
        std::vector<T> batch;
        parker_.park([&] { return !pending_.empty() || input_done_ || stopping_; });
        if (linger_.count() > 0) {
          auto deadline = parker_.with_lock([&] { return first_arrival_ + linger_; });
          parker_.park_until([&] { return pending_.size() >= batch_max_ || input_done_ || stopping_; }, deadline);
        }
        bool done = parker_.with_lock([&] {
          if (stopping_ || (pending_.empty() && input_done_)) return true;
          const size_t n = std::min<size_t>(batch_max_, pending_.size());
          for (size_t k = 0; k < n; ++k) {
            batch.push_back(std::move(pending_.front()));
            pending_.pop_front();
          }
          return false;
        });
        if (done) break;
        parker_.notify([] {});  // room in pending for the accumulator

        std::vector<uint64_t> seqs;
        for (const auto& it : batch) seqs.push_back(it.seq_id);
        ctx.record_batch(static_cast<uint32_t>(batch.size()));
        busy_.store(true, std::memory_order_release);
        const uint64_t t0 = monotonic_ns();
        auto results = fn_(std::move(batch));
        busy_ns += monotonic_ns() - t0;
        busy_.store(false, std::memory_order_release);
        for (auto& r : split_batch_results(std::move(results), seqs)) out.send(std::move(r));
      }
    } catch (...) {
      busy_.store(false, std::memory_order_release);
      device_error_ = std::current_exception();
      parker_.notify([&] { device_failed_ = true; });
      ctx.abort(device_error_);
    }
    ctx.report_busy(busy_ns);
  }

  const uint32_t batch_max_;
  const std::chrono::microseconds linger_;
  BatchFn fn_;

  Parker parker_;
  std::deque<T> pending_;
  std::chrono::steady_clock::time_point first_arrival_;
  bool input_done_ = false;
  bool stopping_ = false;
  bool device_failed_ = false;
  std::exception_ptr device_error_;  // written by the device thread before it exits
  std::atomic<bool> busy_{false};
};

// A transform operator that batches its input through `fn`.
template <PipelineItem T>
OperatorSpec<T> make_batched(std::string name, SchedulerPolicy policy, typename BatchSlot<T>::BatchFn fn) {
  policy.validate();
  return make_transform<T>(std::move(name), [policy, fn = std::move(fn)](Inlet<T>& in, Outlet<T>& out,
                                                                         OperatorContext& ctx) {
    BatchSlot<T> slot(policy, fn);
    slot.run(in, out, ctx);
  });
}

}  // namespace poseflow
