// SPDX-License-Identifier: Apache-2.0
#pragma once

// Bounded single-producer/single-consumer FIFO with out-of-band end of
// stream. Blocking calls park on condition variables; nothing spins.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "poseflow/core/error.hpp"

namespace poseflow {

struct ChannelCounters {
  uint64_t sent = 0;
  uint64_t received = 0;
  uint64_t sender_parks = 0;    // sends that had to wait for space
  uint64_t receiver_parks = 0;  // receives that had to wait for an item
  uint32_t max_depth = 0;
  std::vector<uint64_t> depth_histogram;  // occupancy right after each send, index = depth
};

enum class RecvStatus { item, end_of_stream, timeout };

template <typename T>
class Channel {
 public:
  explicit Channel(uint32_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("channel capacity must be >= 1");
    counters_.depth_histogram.assign(capacity + 1, 0);
  }

  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  uint32_t capacity() const { return capacity_; }

  // Blocks while full. Throws ChannelClosed if the channel is closed or
  // cancelled before the item is enqueued.
  void send(T item) {
    std::unique_lock lock(mu_);
    if (closed_ || cancelled_) throw ChannelClosed(cancelled_ ? "send on cancelled channel" : "send on closed channel");
    if (queue_.size() >= capacity_) {
      ++counters_.sender_parks;
      not_full_.wait(lock, [&] { return queue_.size() < capacity_ || closed_ || cancelled_; });
      if (closed_ || cancelled_) throw ChannelClosed("channel closed while sending");
    }
    queue_.push_back(std::move(item));
    const auto depth = static_cast<uint32_t>(queue_.size());
    depth_.store(depth, std::memory_order_relaxed);
    ++counters_.sent;
    ++counters_.depth_histogram[depth];
    counters_.max_depth = std::max(counters_.max_depth, depth);
    lock.unlock();
    not_empty_.notify_one();
  }

  // Next item, or nullopt once closed and drained. Throws ChannelClosed if
  // the channel was cancelled.
  std::optional<T> receive() {
    std::unique_lock lock(mu_);
    if (queue_.empty() && !closed_ && !cancelled_) {
      ++counters_.receiver_parks;
      not_empty_.wait(lock, [&] { return !queue_.empty() || closed_ || cancelled_; });
    }
    return pop_locked(lock);
  }

  RecvStatus try_receive(std::optional<T>& out) {
    std::unique_lock lock(mu_);
    if (queue_.empty() && !closed_ && !cancelled_) return RecvStatus::timeout;
    out = pop_locked(lock);
    return out ? RecvStatus::item : RecvStatus::end_of_stream;
  }

  template <typename Clock, typename Duration>
  RecvStatus receive_until(std::optional<T>& out, std::chrono::time_point<Clock, Duration> deadline) {
    std::unique_lock lock(mu_);
    if (queue_.empty() && !closed_ && !cancelled_) {
      ++counters_.receiver_parks;
      if (!not_empty_.wait_until(lock, deadline, [&] { return !queue_.empty() || closed_ || cancelled_; })) {
        return RecvStatus::timeout;
      }
    }
    out = pop_locked(lock);
    return out ? RecvStatus::item : RecvStatus::end_of_stream;
  }

  // End of stream: queued items remain receivable.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  // Abort: wakes every waiter; further sends and receives throw.
  void cancel() {
    {
      std::lock_guard lock(mu_);
      cancelled_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  // Lock-free occupancy sample for progress display.
  uint32_t depth() const { return depth_.load(std::memory_order_relaxed); }

  ChannelCounters counters() const {
    std::lock_guard lock(mu_);
    return counters_;
  }

 private:
  std::optional<T> pop_locked(std::unique_lock<std::mutex>& lock) {
    if (cancelled_) throw ChannelClosed("channel cancelled");
    if (queue_.empty()) return std::nullopt;
    std::optional<T> item(std::move(queue_.front()));
    queue_.pop_front();
    depth_.store(static_cast<uint32_t>(queue_.size()), std::memory_order_relaxed);
    ++counters_.received;
    lock.unlock();
    not_full_.notify_one();
    return item;
  }

  const uint32_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> queue_;
  bool closed_ = false;
  bool cancelled_ = false;
  std::atomic<uint32_t> depth_{0};
  ChannelCounters counters_;
};

}  // namespace poseflow
