// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <ctime>
#include <mutex>
#include <thread>

#include "poseflow/scheduler/batch_slot.hpp"
#include "poseflow/scheduler/parker.hpp"
#include "test_util.hpp"

namespace poseflow {
namespace {

using namespace std::chrono_literals;
using testing_util::finishes_within;

struct Item {
  uint64_t seq_id = 0;
  uint64_t ingest_ns = 0;
};

// Emits items at the given offsets from the first produce call.
OperatorSpec<Item> timed_source(std::vector<std::chrono::microseconds> at) {
  struct State {
    size_t next = 0;
    std::chrono::steady_clock::time_point t0;
  };
  auto st = std::make_shared<State>();
  return make_source<Item>("source", [at, st](OperatorContext&) -> std::optional<Item> {
    if (st->next == 0) st->t0 = std::chrono::steady_clock::now();
    if (st->next >= at.size()) return std::nullopt;
    std::this_thread::sleep_until(st->t0 + at[st->next]);
    return Item{st->next++, 0};
  });
}

struct Recorder {
  std::mutex mu;
  std::vector<std::vector<uint64_t>> batches;
};

// Device with a fixed service time; records every dispatched batch.
typename BatchSlot<Item>::BatchFn device(Recorder& rec, std::chrono::microseconds service) {
  return [&rec, service](std::vector<Item>&& batch) {
    auto start = std::chrono::steady_clock::now();
    {
      std::lock_guard lock(rec.mu);
      std::vector<uint64_t> ids;
      for (const auto& it : batch) ids.push_back(it.seq_id);
      rec.batches.push_back(ids);
    }
    std::this_thread::sleep_until(start + service);
    return std::move(batch);
  };
}

PipelineStats run_batched(std::vector<std::chrono::microseconds> at, SchedulerPolicy policy,
                          typename BatchSlot<Item>::BatchFn fn, std::vector<uint64_t>& seen, uint32_t cap = 8) {
  auto g = build_pipeline<Item>(
      cap, {timed_source(std::move(at)), make_batched<Item>("infer", policy, std::move(fn)),
            make_sink<Item>("sink", [&seen](Item&& it, OperatorContext&) { seen.push_back(it.seq_id); })});
  return run_pipeline(g);
}

TEST(BatchSlot, IdleDeviceDispatchesSingleItem) {
  Recorder rec;
  std::vector<uint64_t> seen;
  auto st = run_batched({0us}, SchedulerPolicy{true, 8, 0}, device(rec, 1ms), seen);
  ASSERT_EQ(rec.batches.size(), 1u);
  EXPECT_EQ(rec.batches[0], (std::vector<uint64_t>{0}));
  EXPECT_LT(st.latency_p50_ns, 20'000'000u);
  EXPECT_EQ(st.batch_histogram.at(1), 1u);
}

TEST(BatchSlot, BusyDeviceAccumulates) {
  Recorder rec;
  std::vector<uint64_t> seen;
  // Item 0 occupies the device for 20 ms; items 1..4 arrive meanwhile.
  auto st = run_batched({0us, 3ms, 4ms, 5ms, 6ms}, SchedulerPolicy{true, 8, 0}, device(rec, 20ms), seen);
  ASSERT_EQ(rec.batches.size(), 2u);
  EXPECT_EQ(rec.batches[0], (std::vector<uint64_t>{0}));
  EXPECT_EQ(rec.batches[1], (std::vector<uint64_t>{1, 2, 3, 4}));
  EXPECT_EQ(seen, (std::vector<uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(st.batch_histogram.at(4), 1u);
}

TEST(BatchSlot, DisabledPolicyNeverBatches) {
  Recorder rec;
  std::vector<uint64_t> seen;
  std::vector<std::chrono::microseconds> at(20, 0us);
  run_batched(at, SchedulerPolicy{false, 8, 5000}, device(rec, 2ms), seen);
  EXPECT_EQ(rec.batches.size(), 20u);
  for (const auto& b : rec.batches) EXPECT_EQ(b.size(), 1u);
}

TEST(BatchSlot, BatchMaxCaps) {
  Recorder rec;
  std::vector<uint64_t> seen;
  std::vector<std::chrono::microseconds> at(50, 0us);
  run_batched(at, SchedulerPolicy{true, 3, 0}, device(rec, 2ms), seen);
  for (const auto& b : rec.batches) {
    EXPECT_GE(b.size(), 1u);
    EXPECT_LE(b.size(), 3u);
  }
  EXPECT_EQ(seen.size(), 50u);
}

TEST(BatchSlot, LingerWaitsForFullBatch) {
  Recorder rec;
  std::vector<uint64_t> seen;
  auto st = run_batched({0us, 2ms, 4ms, 6ms}, SchedulerPolicy{true, 4, 30000}, device(rec, 1ms), seen);
  ASSERT_EQ(rec.batches.size(), 1u);
  EXPECT_EQ(rec.batches[0].size(), 4u);
}

TEST(BatchSlot, LingerBoundsAddedDelay) {
  Recorder rec;
  std::vector<uint64_t> seen;
  // The stream stays open past the linger window for the first two items.
  auto st = run_batched({0us, 100ms, 200ms}, SchedulerPolicy{true, 8, 20000}, device(rec, 0us), seen);
  ASSERT_EQ(rec.batches.size(), 3u);
  EXPECT_GE(st.latency_p50_ns, 19'000'000u);
  EXPECT_LT(st.latency_p50_ns, 60'000'000u);
}

TEST(BatchSlot, FinalPartialBatchIsFlushed) {
  Recorder rec;
  std::vector<uint64_t> seen;
  std::vector<std::chrono::microseconds> at(11, 0us);
  run_batched(at, SchedulerPolicy{true, 4, 1'000'000}, device(rec, 1ms), seen);
  EXPECT_EQ(seen.size(), 11u);
  size_t total = 0;
  for (const auto& b : rec.batches) total += b.size();
  EXPECT_EQ(total, 11u);
}

TEST(BatchSlot, OrderIdenticalAcrossBatchSizes) {
  auto run = [](SchedulerPolicy p) {
    Recorder rec;
    std::vector<uint64_t> seen;
    std::vector<std::chrono::microseconds> at(1000, 0us);
    // The device answers in reverse order; split_batch_results restores it.
    auto fn = [](std::vector<Item>&& b) {
      std::reverse(b.begin(), b.end());
      return std::move(b);
    };
    auto st = run_batched(at, p, fn, seen, 4);
    EXPECT_TRUE(st.ordered);
    return seen;
  };
  auto one = run(SchedulerPolicy{true, 1, 0});
  auto eight = run(SchedulerPolicy{true, 8, 0});
  ASSERT_EQ(one.size(), 1000u);
  EXPECT_EQ(one, eight);
  for (uint64_t i = 0; i < 1000; ++i) ASSERT_EQ(one[i], i);
}

TEST(BatchSlot, WrongResultCountAborts) {
  std::vector<uint64_t> seen;
  auto fn = [](std::vector<Item>&& b) {
    std::this_thread::sleep_for(5ms);
    if (b.size() > 1) b.pop_back();
    return std::move(b);
  };
  std::vector<std::chrono::microseconds> at(40, 0us);
  EXPECT_TRUE(finishes_within(30s, [&] {
    try {
      run_batched(at, SchedulerPolicy{true, 8, 0}, fn, seen);
      ADD_FAILURE() << "expected abort";
    } catch (const PipelineAborted& e) {
      EXPECT_EQ(e.operator_name(), "infer");
      EXPECT_NE(describe_exception(e).find("results for a batch of"), std::string::npos);
    }
  }));
}

TEST(BatchSlot, DeviceFailureWithSequentialGateDoesNotHang) {
  auto fn = [](std::vector<Item>&& b) -> std::vector<Item> {
    if (b.front().seq_id == 3) throw BackendError("device lost");
    return std::move(b);
  };
  auto g = build_pipeline<Item>(2, {timed_source(std::vector<std::chrono::microseconds>(10, 0us)),
                                    make_batched<Item>("infer", SchedulerPolicy{}, fn),
                                    make_sink<Item>("sink", [](Item&&, OperatorContext&) {})});
  RunOptions opts;
  opts.max_in_flight = 1;
  EXPECT_TRUE(finishes_within(10s, [&] { EXPECT_THROW(run_pipeline(g, opts), PipelineAborted); }));
}

TEST(SplitBatchResults, ReordersAndChecks) {
  std::vector<Item> out = {{7, 0}, {5, 0}, {6, 0}};
  std::vector<uint64_t> ids = {5, 6, 7};
  auto sorted = split_batch_results(out, ids);
  EXPECT_EQ(sorted[0].seq_id, 5u);
  EXPECT_EQ(sorted[1].seq_id, 6u);
  EXPECT_EQ(sorted[2].seq_id, 7u);
  EXPECT_THROW(split_batch_results(std::vector<Item>{{5, 0}, {6, 0}}, ids), BackendError);
  EXPECT_THROW(split_batch_results(std::vector<Item>{{5, 0}, {6, 0}, {9, 0}}, ids), BackendError);
}

// ---------------------------------------------------------------------------
// Parking

TEST(Parker, WakesWithinAMillisecond) {
  Parker p;
  std::vector<int64_t> lag_us;
  for (int trial = 0; trial < 50; ++trial) {
    bool ready = false;
    std::chrono::steady_clock::time_point sent;
    std::thread waiter([&] {
      p.park([&] { return ready; });
      lag_us.push_back(std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - sent)
                           .count());
    });
    std::this_thread::sleep_for(2ms);
    p.notify([&] {
      sent = std::chrono::steady_clock::now();
      ready = true;
    });
    waiter.join();
  }
  std::sort(lag_us.begin(), lag_us.end());
  EXPECT_LT(lag_us[lag_us.size() / 2], 1000);
  EXPECT_GT(p.park_count(), 0u);
}

TEST(Parker, NoLostWakeupsUnderStorm) {
  constexpr uint64_t kN = 100000;
  Parker p;
  uint64_t produced = 0;
  uint64_t consumed = 0;
  EXPECT_TRUE(finishes_within(60s, [&] {
    std::thread consumer([&] {
      for (uint64_t i = 0; i < kN; ++i) {
        p.park([&] { return produced > consumed; });
        p.notify([&] { ++consumed; });
      }
    });
    for (uint64_t i = 0; i < kN; ++i) {
      p.park([&] { return produced == consumed; });
      p.notify([&] { ++produced; });
    }
    consumer.join();
  }));
  EXPECT_EQ(consumed, kN);
}

TEST(Parker, ParkUntilTimesOut) {
  Parker p;
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_FALSE(p.park_until([] { return false; }, t0 + 10ms));
  EXPECT_GE(std::chrono::steady_clock::now() - t0, 10ms);
}

TEST(Scheduler, StarvedBatchedPipelineStaysIdle) {
  std::vector<std::chrono::microseconds> at;
  for (int i = 0; i < 10; ++i) at.push_back(std::chrono::milliseconds(100 * i));
  Recorder rec;
  std::vector<uint64_t> seen;
  std::clock_t c0 = std::clock();
  auto st = run_batched(at, SchedulerPolicy{}, device(rec, 1ms), seen);
  double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  EXPECT_LT(cpu / (static_cast<double>(st.wall_ns) * 1e-9), 0.15);
}

}  // namespace
}  // namespace poseflow
