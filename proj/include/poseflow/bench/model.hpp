// SPDX-License-Identifier: Apache-2.0
#pragma once

// Throughput oracles for bench profiles.
//
// predict_throughput is the closed form: 1/sum of stage times when frames go
// one at a time, 1/max when stages overlap, and a batched stage counts
// (overhead + b * per_item) / b per frame at its largest batch.
//
// simulate_policy replays the same pipeline as a discrete-event simulation:
// bounded channels with blocking sends, the source gate, and the batch slot
// rules (accumulate up to batch_max while the device is busy, dispatch
// immediately when idle, optional linger). No threads, no clocks.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "poseflow/bench/profile.hpp"
#include "poseflow/core/error.hpp"

namespace poseflow {

struct ThroughputPrediction {
  double sequential_fps = 0;
  double pipelined_fps = 0;
  double config_fps = 0;  // whichever of the two the config runs as
  std::string bottleneck;
};

inline double per_frame_us(const StageModel& s, uint32_t batch) {
  return static_cast<double>(s.service_us(batch)) / (s.batched ? batch : 1);
}

inline ThroughputPrediction predict_throughput(const BenchProfile& p, const BenchConfig& c) {
  ThroughputPrediction out;
  const uint32_t b = c.scheduler.effective_batch_max();
  double total = p.source.latency_us;
  double worst = p.source.latency_us;
  out.bottleneck = "source";
  for (const auto& s : p.stages) {
    total += per_frame_us(s, 1);
    const double t = per_frame_us(s, b);
    if (t > worst) {
      worst = t;
      out.bottleneck = s.name;
    }
  }
  auto fps = [](double us) { return us > 0 ? 1e6 / us : std::numeric_limits<double>::infinity(); };
  out.sequential_fps = fps(total);
  out.pipelined_fps = fps(worst);
  out.config_fps = c.sequential ? out.sequential_fps : out.pipelined_fps;
  return out;
}

// Gaps between source arrivals, in microseconds. Fixed sources have none
// (each frame takes latency_us to read); Poisson sources draw exponential
// gaps from the profile seed.
inline std::vector<uint64_t> arrival_offsets_us(const SourceModel& s, uint64_t frames) {
  std::vector<uint64_t> at;
  if (s.arrival != ArrivalKind::poisson) return at;
  std::mt19937_64 rng(s.seed);
  std::exponential_distribution<double> gap(s.latency_us > 0 ? 1.0 / s.latency_us : 1e9);
  at.reserve(frames);
  double t = 0;
  for (uint64_t n = 0; n < frames; ++n) {
    t += s.latency_us > 0 ? gap(rng) : 0.0;
    at.push_back(static_cast<uint64_t>(t));
  }
  return at;
}

struct SimulationResult {
  uint64_t frames = 0;
  uint64_t makespan_us = 0;  // until the sink has seen the last frame
  double fps = 0;
  std::vector<uint64_t> batch_histogram;  // index = batch size
  std::vector<uint64_t> latency_us;       // per frame, source stamp to sink
  std::vector<uint32_t> max_depth;        // per edge
};

namespace detail {

using SimTime = uint64_t;
constexpr SimTime kNever = std::numeric_limits<SimTime>::max();

struct SimItem {
  uint64_t seq = 0;
  SimTime ingest = 0;
};

struct SimChannel {
  uint32_t capacity = 1;
  std::deque<SimItem> q;
  bool closed = false;
  uint32_t max_depth = 0;

  bool full() const { return q.size() >= capacity; }
  void push(SimItem it) {
    q.push_back(it);
    max_depth = std::max<uint32_t>(max_depth, static_cast<uint32_t>(q.size()));
  }
};

struct SimState {
  SimTime now = 0;
  uint32_t in_flight = 0;
};

class SimProcess {
 public:
  virtual ~SimProcess() = default;
  // Advances as far as possible at `now`; true if anything changed.
  virtual bool step(SimState& st) = 0;
  virtual bool done() const = 0;
  SimTime wake = kNever;
};

class SimSource final : public SimProcess {
 public:
  SimSource(SimChannel* out, uint64_t frames, const SourceModel& m, uint32_t max_in_flight)
      : out_(out), frames_(frames), model_(m), gate_(max_in_flight), arrivals_(arrival_offsets_us(m, frames)) {}

  bool step(SimState& st) override {
    bool moved = false;
    for (;;) {
      switch (state_) {
        case State::admit:
          if (n_ == frames_) {
            out_->closed = true;
            state_ = State::done;
            return true;
          }
          if (gate_ && st.in_flight >= gate_) return moved;
          ++st.in_flight;
          wake = arrivals_.empty() ? st.now + model_.latency_us : std::max(st.now, arrivals_[n_]);
          state_ = State::produce;
          moved = true;
          break;
        case State::produce:
          if (st.now < wake) return moved;
          wake = kNever;
          item_ = {n_, st.now};
          state_ = State::send;
          moved = true;
          break;
        case State::send:
          if (out_->full()) return moved;
          out_->push(item_);
          ++n_;
          state_ = State::admit;
          moved = true;
          break;
        case State::done: return moved;
      }
    }
  }
  bool done() const override { return state_ == State::done; }

 private:
  enum class State { admit, produce, send, done };
  SimChannel* out_;
  uint64_t frames_;
  SourceModel model_;
  uint32_t gate_;
  std::vector<uint64_t> arrivals_;
  State state_ = State::admit;
  uint64_t n_ = 0;
  SimItem item_;
};

class SimStage final : public SimProcess {
 public:
  SimStage(SimChannel* in, SimChannel* out, uint64_t latency_us) : in_(in), out_(out), latency_(latency_us) {}

  bool step(SimState& st) override {
    bool moved = false;
    for (;;) {
      switch (state_) {
        case State::recv:
          if (!in_->q.empty()) {
            item_ = in_->q.front();
            in_->q.pop_front();
            wake = st.now + latency_;
            state_ = State::serve;
          } else if (in_->closed) {
            out_->closed = true;
            state_ = State::done;
            return true;
          } else {
            return moved;
          }
          moved = true;
          break;
        case State::serve:
          if (st.now < wake) return moved;
          wake = kNever;
          state_ = State::send;
          moved = true;
          break;
        case State::send:
          if (out_->full()) return moved;
          out_->push(item_);
          state_ = State::recv;
          moved = true;
          break;
        case State::done: return moved;
      }
    }
  }
  bool done() const override { return state_ == State::done; }

 private:
  enum class State { recv, serve, send, done };
  SimChannel* in_;
  SimChannel* out_;
  uint64_t latency_;
  State state_ = State::recv;
  SimItem item_;
};

struct SimPending {
  std::deque<SimItem> items;
  SimTime first_arrival = 0;
  bool input_done = false;
};

class SimAccumulator final : public SimProcess {
 public:
  SimAccumulator(SimChannel* in, SimPending* pending, uint32_t batch_max)
      : in_(in), pending_(pending), batch_max_(batch_max) {}

  bool step(SimState& st) override {
    bool moved = false;
    while (!done_) {
      if (pending_->items.size() >= batch_max_) return moved;
      if (!in_->q.empty()) {
        if (pending_->items.empty()) pending_->first_arrival = st.now;
        pending_->items.push_back(in_->q.front());
        in_->q.pop_front();
      } else if (in_->closed) {
        pending_->input_done = true;
        done_ = true;
      } else {
        return moved;
      }
      moved = true;
    }
    return moved;
  }
  bool done() const override { return done_; }

 private:
  SimChannel* in_;
  SimPending* pending_;
  uint32_t batch_max_;
  bool done_ = false;
};

class SimDevice final : public SimProcess {
 public:
  SimDevice(SimPending* pending, SimChannel* out, const StageModel& m, uint32_t batch_max, uint32_t linger_us,
            std::vector<uint64_t>* histogram)
      : pending_(pending), out_(out), model_(m), batch_max_(batch_max), linger_(linger_us), hist_(histogram) {}

  bool step(SimState& st) override {
    bool moved = false;
    for (;;) {
      switch (state_) {
        case State::wait:
          if (pending_->items.empty() && !pending_->input_done) return moved;
          if (linger_ > 0) {
            wake = pending_->first_arrival + linger_;
            state_ = State::linger;
          } else {
            state_ = State::take;
          }
          moved = true;
          break;
        case State::linger:
          if (pending_->items.size() < batch_max_ && !pending_->input_done && st.now < wake) return moved;
          wake = kNever;
          state_ = State::take;
          moved = true;
          break;
        case State::take: {
          if (pending_->items.empty()) {
            out_->closed = true;
            state_ = State::done;
            return true;
          }
          const size_t n = std::min<size_t>(batch_max_, pending_->items.size());
          batch_.assign(pending_->items.begin(), pending_->items.begin() + static_cast<std::ptrdiff_t>(n));
          pending_->items.erase(pending_->items.begin(), pending_->items.begin() + static_cast<std::ptrdiff_t>(n));
          if (hist_->size() <= n) hist_->resize(n + 1, 0);
          ++(*hist_)[n];
          wake = st.now + model_.service_us(static_cast<uint32_t>(n));
          state_ = State::serve;
          moved = true;
          break;
        }
        case State::serve:
          if (st.now < wake) return moved;
          wake = kNever;
          next_ = 0;
          state_ = State::send;
          moved = true;
          break;
        case State::send:
          while (next_ < batch_.size()) {
            if (out_->full()) return moved;
            out_->push(batch_[next_++]);
            moved = true;
          }
          state_ = State::wait;
          break;
        case State::done: return moved;
      }
    }
  }
  bool done() const override { return state_ == State::done; }

 private:
  enum class State { wait, linger, take, serve, send, done };
  SimPending* pending_;
  SimChannel* out_;
  StageModel model_;
  uint32_t batch_max_;
  uint64_t linger_;
  std::vector<uint64_t>* hist_;
  State state_ = State::wait;
  std::vector<SimItem> batch_;
  size_t next_ = 0;
};

class SimSink final : public SimProcess {
 public:
  SimSink(SimChannel* in, SimulationResult* result) : in_(in), result_(result) {}

  bool step(SimState& st) override {
    bool moved = false;
    while (!done_) {
      if (!in_->q.empty()) {
        const SimItem it = in_->q.front();
        in_->q.pop_front();
        result_->latency_us.push_back(st.now - it.ingest);
        ++result_->frames;
        --st.in_flight;
      } else if (in_->closed) {
        result_->makespan_us = st.now;
        done_ = true;
      } else {
        return moved;
      }
      moved = true;
    }
    return moved;
  }
  bool done() const override { return done_; }

 private:
  SimChannel* in_;
  SimulationResult* result_;
  bool done_ = false;
};

}  // namespace detail

inline SimulationResult simulate_policy(const BenchProfile& p, const BenchConfig& c) {
  using namespace detail;
  SimulationResult result;
  const size_t edges = p.stages.size() + 1;
  std::vector<SimChannel> ch(edges);
  for (auto& e : ch) e.capacity = p.channel_capacity;
  SimPending pending;

  std::vector<std::unique_ptr<SimProcess>> procs;
  procs.push_back(std::make_unique<SimSource>(&ch[0], p.frames, p.source, c.sequential ? 1u : 0u));
  for (size_t s = 0; s < p.stages.size(); ++s) {
    const auto& m = p.stages[s];
    if (m.batched) {
      procs.push_back(std::make_unique<SimAccumulator>(&ch[s], &pending, c.scheduler.effective_batch_max()));
      procs.push_back(std::make_unique<SimDevice>(&pending, &ch[s + 1], m, c.scheduler.effective_batch_max(),
                                                  c.scheduler.effective_linger_us(), &result.batch_histogram));
    } else {
      procs.push_back(std::make_unique<SimStage>(&ch[s], &ch[s + 1], m.service_us(1)));
    }
  }
  procs.push_back(std::make_unique<SimSink>(&ch[edges - 1], &result));

  SimState st;
  for (;;) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (auto& proc : procs) moved |= proc->step(st);
    }
    if (std::all_of(procs.begin(), procs.end(), [](const auto& proc) { return proc->done(); })) break;
    SimTime next = kNever;
    for (const auto& proc : procs) {
      if (!proc->done() && proc->wake > st.now) next = std::min(next, proc->wake);
    }
    if (next == kNever) throw Error("bench simulation deadlocked at t=" + std::to_string(st.now) + "us");
    st.now = next;
  }
  for (const auto& e : ch) result.max_depth.push_back(e.max_depth);
  result.fps = result.makespan_us ? static_cast<double>(result.frames) * 1e6 / static_cast<double>(result.makespan_us)
                                  : std::numeric_limits<double>::infinity();
  return result;
}

}  // namespace poseflow
