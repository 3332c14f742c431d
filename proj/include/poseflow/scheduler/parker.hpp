// SPDX-License-Identifier: Apache-2.0
#pragma once

// Park/notify for workers sharing a small piece of state. The state is only
// touched inside park predicates and notify mutators, both of which run under
// the parker's lock, so a notification can never slip between a failed check
// and the wait.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>

namespace poseflow {

class Parker {
 public:
  // Blocks until pred() holds; pred is re-checked after every wakeup.
  template <typename Pred>
  void park(Pred pred) {
    std::unique_lock lock(mu_);
    if (pred()) return;
    ++parks_;
    cv_.wait(lock, pred);
  }

  // Returns pred() at exit, false meaning the deadline passed.
  template <typename Pred, typename Clock, typename Duration>
  bool park_until(Pred pred, std::chrono::time_point<Clock, Duration> deadline) {
    std::unique_lock lock(mu_);
    if (pred()) return true;
    ++parks_;
    return cv_.wait_until(lock, deadline, pred);
  }

  // Runs fn under the lock and returns its result.
  template <typename Fn>
  auto with_lock(Fn fn) {
    std::lock_guard lock(mu_);
    return fn();
  }

  template <typename Fn>
  void notify(Fn mutate) {
    {
      std::lock_guard lock(mu_);
      mutate();
    }
    cv_.notify_all();
  }

  uint64_t park_count() const {
    std::lock_guard lock(mu_);
    return parks_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  uint64_t parks_ = 0;
};

}  // namespace poseflow
