// SPDX-License-Identifier: Apache-2.0
#pragma once

// Static linear pipelines: source -> transforms -> sink, one worker thread
// per operator, bounded channels between neighbours.

#include <atomic>
#include <chrono>
#include <concepts>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "poseflow/core/config.hpp"
#include "poseflow/core/error.hpp"
#include "poseflow/core/types.hpp"
#include "poseflow/dataflow/channel.hpp"
#include "poseflow/dataflow/stats.hpp"

namespace poseflow {

template <typename T>
concept PipelineItem = std::movable<T> && requires(T t) {
  { t.seq_id } -> std::convertible_to<uint64_t>;
  t.ingest_ns = uint64_t{};
};

class PipelineAborted : public Error {
 public:
  PipelineAborted(const std::string& what, std::string op, PipelineStats stats)
      : Error(what), operator_(std::move(op)), stats_(std::move(stats)) {}
  const std::string& operator_name() const { return operator_; }
  const PipelineStats& stats() const { return stats_; }

 private:
  std::string operator_;
  PipelineStats stats_;
};

enum class OperatorKind { source, transform, sink };

namespace detail {

// Atomic because an operator may run a helper thread (see BatchSlot).
struct WorkerCounters {
  std::atomic<uint64_t> items_in{0};
  std::atomic<uint64_t> items_out{0};
  std::atomic<uint64_t> idle_ns{0};
  std::atomic<uint64_t> reported_busy_ns{0};
  bool busy_reported = false;
  uint64_t busy_ns = 0;
  std::vector<uint64_t> batch_histogram;
};

class IdleTimer {
 public:
  explicit IdleTimer(WorkerCounters& c) : c_(c), start_(monotonic_ns()) {}
  ~IdleTimer() { c_.idle_ns += monotonic_ns() - start_; }
  IdleTimer(const IdleTimer&) = delete;
  IdleTimer& operator=(const IdleTimer&) = delete;

 private:
  WorkerCounters& c_;
  uint64_t start_;
};

}  // namespace detail

class OperatorContext {
 public:
  OperatorContext(std::string name, const std::atomic<bool>* aborted, detail::WorkerCounters* counters,
                  std::function<void(std::exception_ptr)> abort)
      : name_(std::move(name)), aborted_(aborted), counters_(counters), abort_(std::move(abort)) {}

  const std::string& name() const { return name_; }
  bool abort_requested() const { return aborted_->load(std::memory_order_relaxed); }

  // Fails the pipeline from a helper thread of this operator; the first
  // failure wins.
  void abort(std::exception_ptr e) const {
    if (abort_) abort_(e);
  }

  // Replaces the default busy time (worker lifetime minus blocking) with
  // time the operator measured itself.
  void report_busy(uint64_t ns) {
    counters_->busy_reported = true;
    counters_->reported_busy_ns.fetch_add(ns, std::memory_order_relaxed);
  }

  // Batch sizes for the stats histogram. Only one thread per operator may
  // record, and it must finish before the operator returns.
  void record_batch(uint32_t size) {
    auto& h = counters_->batch_histogram;
    if (h.size() <= size) h.resize(size + 1, 0);
    ++h[size];
  }

 private:
  std::string name_;
  const std::atomic<bool>* aborted_;
  detail::WorkerCounters* counters_;
  std::function<void(std::exception_ptr)> abort_;
};

template <typename T>
class Inlet {
 public:
  Inlet(Channel<T>& ch, detail::WorkerCounters& c) : ch_(ch), c_(c) {}

  std::optional<T> receive() {
    detail::IdleTimer idle(c_);
    return count(ch_.receive());
  }

  template <typename Clock, typename Duration>
  RecvStatus receive_until(std::optional<T>& out, std::chrono::time_point<Clock, Duration> deadline) {
    detail::IdleTimer idle(c_);
    auto st = ch_.receive_until(out, deadline);
    count_status(st);
    return st;
  }

  RecvStatus try_receive(std::optional<T>& out) {
    auto st = ch_.try_receive(out);
    count_status(st);
    return st;
  }

  bool ended() const { return ended_; }

 private:
  std::optional<T> count(std::optional<T> item) {
    if (item) {
      ++c_.items_in;
    } else {
      ended_ = true;
    }
    return item;
  }
  void count_status(RecvStatus st) {
    if (st == RecvStatus::item) ++c_.items_in;
    if (st == RecvStatus::end_of_stream) ended_ = true;
  }

  Channel<T>& ch_;
  detail::WorkerCounters& c_;
  bool ended_ = false;
};

template <typename T>
class Outlet {
 public:
  Outlet(Channel<T>& ch, detail::WorkerCounters& c) : ch_(ch), c_(c) {}

  void send(T item) {
    {
      detail::IdleTimer idle(c_);
      ch_.send(std::move(item));
    }
    ++c_.items_out;
  }

 private:
  Channel<T>& ch_;
  detail::WorkerCounters& c_;
};

template <typename T>
struct OperatorSpec {
  std::string name;
  OperatorKind kind = OperatorKind::transform;
  std::function<std::optional<T>(OperatorContext&)> produce;        // source: nullopt ends the stream
  std::function<void(Inlet<T>&, Outlet<T>&, OperatorContext&)> run;  // transform: must drain its inlet
  std::function<void(T&&, OperatorContext&)> consume;               // sink
};

template <typename T>
OperatorSpec<T> make_source(std::string name, std::function<std::optional<T>(OperatorContext&)> produce) {
  return {std::move(name), OperatorKind::source, std::move(produce), {}, {}};
}

template <typename T>
OperatorSpec<T> make_transform(std::string name, std::function<void(Inlet<T>&, Outlet<T>&, OperatorContext&)> run) {
  return {std::move(name), OperatorKind::transform, {}, std::move(run), {}};
}

// One output per input, in order.
template <typename T>
OperatorSpec<T> make_map(std::string name, std::function<T(T&&, OperatorContext&)> fn) {
  return make_transform<T>(std::move(name), [fn = std::move(fn)](Inlet<T>& in, Outlet<T>& out, OperatorContext& ctx) {
    while (auto item = in.receive()) out.send(fn(std::move(*item), ctx));
  });
}

template <typename T>
OperatorSpec<T> make_sink(std::string name, std::function<void(T&&, OperatorContext&)> consume) {
  return {std::move(name), OperatorKind::sink, {}, {}, std::move(consume)};
}

template <PipelineItem T>
class PipelineGraph {
 public:
  const std::vector<OperatorSpec<T>>& operators() const { return ops_; }
  size_t edge_count() const { return channels_.size(); }
  uint32_t channel_capacity() const { return capacity_; }

 private:
  template <PipelineItem U>
  friend PipelineGraph<U> build_pipeline(uint32_t, std::vector<OperatorSpec<U>>);
  template <PipelineItem U>
  friend class PipelineRun;

  std::vector<OperatorSpec<T>> ops_;
  std::vector<std::unique_ptr<Channel<T>>> channels_;
  uint32_t capacity_ = 0;
  bool consumed_ = false;
};

template <PipelineItem T>
PipelineGraph<T> build_pipeline(uint32_t channel_capacity, std::vector<OperatorSpec<T>> ops) {
  if (ops.empty()) throw GraphError("pipeline has no operators");
  if (ops.size() < 2) throw GraphError("pipeline needs a source and a sink");
  if (channel_capacity < 1) throw GraphError("channel capacity must be >= 1");
  std::set<std::string> names;
  size_t sources = 0;
  size_t sinks = 0;
  for (size_t n = 0; n < ops.size(); ++n) {
    const auto& op = ops[n];
    if (op.name.empty()) throw GraphError("operator " + std::to_string(n) + " has no name");
    if (!names.insert(op.name).second) throw GraphError("duplicate operator name '" + op.name + "'");
    sources += op.kind == OperatorKind::source;
    sinks += op.kind == OperatorKind::sink;
    bool has_fn = (op.kind == OperatorKind::source && op.produce) || (op.kind == OperatorKind::transform && op.run) ||
                  (op.kind == OperatorKind::sink && op.consume);
    if (!has_fn) throw GraphError("operator '" + op.name + "' has no processing function");
  }
  if (sources != 1) throw GraphError("pipeline needs exactly one source, got " + std::to_string(sources));
  if (sinks != 1) throw GraphError("pipeline needs exactly one sink, got " + std::to_string(sinks));
  if (ops.front().kind != OperatorKind::source) throw GraphError("the source must be the first operator");
  if (ops.back().kind != OperatorKind::sink) throw GraphError("the sink must be the last operator");

  PipelineGraph<T> g;
  g.capacity_ = channel_capacity;
  for (size_t n = 0; n + 1 < ops.size(); ++n) g.channels_.push_back(std::make_unique<Channel<T>>(channel_capacity));
  g.ops_ = std::move(ops);
  return g;
}

template <PipelineItem T>
PipelineGraph<T> build_pipeline(const PipelineConfig& cfg, std::vector<OperatorSpec<T>> ops) {
  return build_pipeline<T>(cfg.channel_capacity, std::move(ops));
}

struct RunOptions {
  uint32_t max_in_flight = 0;  // 0: unbounded; 1: sequential, one frame in the chain at a time
  std::stop_token stop;        // external stop, e.g. a watchdog
  std::ostream* progress = nullptr;
  std::chrono::milliseconds progress_interval{1000};
};

template <PipelineItem T>
class PipelineRun {
 public:
  PipelineRun(PipelineGraph<T>& g, RunOptions opts) : g_(g), opts_(std::move(opts)), counters_(g.ops_.size()) {}

  PipelineStats run() {
    if (g_.consumed_) throw GraphError("pipeline graph has already run");
    g_.consumed_ = true;
    start_ns_ = monotonic_ns();
    std::optional<std::stop_callback<std::function<void()>>> on_stop;
    if (opts_.stop.stop_possible()) {
      on_stop.emplace(opts_.stop, std::function<void()>([this] { fail("", nullptr, "pipeline stopped externally"); }));
    }
    std::vector<std::thread> workers;
    workers.reserve(g_.ops_.size());
    for (size_t n = 0; n < g_.ops_.size(); ++n) workers.emplace_back([this, n] { work(n); });
    std::thread progress;
    if (opts_.progress) progress = std::thread([this] { report_progress(); });
    for (auto& w : workers) w.join();
    {
      std::lock_guard lock(mu_);
      finished_ = true;
    }
    cv_.notify_all();
    if (progress.joinable()) progress.join();
    on_stop.reset();

    PipelineStats stats = collect();
    if (aborted_) {
      stats.aborted = true;
      stats.error = error_text_;
      std::string what = failed_op_.empty() ? error_text_ : "operator '" + failed_op_ + "' failed: " + error_text_;
      if (error_) {
        try {
          std::rethrow_exception(error_);
        } catch (...) {
          std::throw_with_nested(PipelineAborted(what, failed_op_, stats));
        }
      }
      throw PipelineAborted(what, failed_op_, stats);
    }
    return stats;
  }

 private:
  void fail(const std::string& op, std::exception_ptr e, std::string text) {
    {
      std::lock_guard lock(mu_);
      if (aborted_) return;
      failed_op_ = op;
      error_ = e;
      error_text_ = std::move(text);
      aborted_ = true;
    }
    for (auto& ch : g_.channels_) ch->cancel();
    cv_.notify_all();
  }

  // Sequential-mode admission; false once aborted.
  bool admit() {
    if (opts_.max_in_flight == 0) return !aborted_;
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < opts_.max_in_flight || aborted_; });
    if (aborted_) return false;
    ++in_flight_;
    return true;
  }

  void release() {
    if (opts_.max_in_flight == 0) return;
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_all();
  }

  void work(size_t n) {
    const auto& op = g_.ops_[n];
    auto& c = counters_[n];
    OperatorContext ctx(op.name, &aborted_, &c, [this, name = op.name](std::exception_ptr e) {
      fail(name, e, e ? describe_exception_ptr(e) : "aborted");
    });
    const uint64_t t0 = monotonic_ns();
    try {
      switch (op.kind) {
        case OperatorKind::source: run_source(op, *g_.channels_[n], c, ctx); break;
        case OperatorKind::transform: run_transform(op, *g_.channels_[n - 1], *g_.channels_[n], c, ctx); break;
        case OperatorKind::sink: run_sink(op, *g_.channels_[n - 1], c, ctx); break;
      }
    } catch (const ChannelClosed& e) {
      if (!aborted_) fail(op.name, std::current_exception(), describe_exception(e));
    } catch (const std::exception& e) {
      fail(op.name, std::current_exception(), describe_exception(e));
    } catch (...) {
      fail(op.name, std::current_exception(), "unknown exception");
    }
    const uint64_t total = monotonic_ns() - t0;
    const uint64_t idle = c.idle_ns.load();
    if (c.busy_reported) {
      c.busy_ns = c.reported_busy_ns.load();
      c.idle_ns = total > c.busy_ns ? total - c.busy_ns : 0;
    } else {
      c.busy_ns = total > idle ? total - idle : 0;
    }
  }

  void run_source(const OperatorSpec<T>& op, Channel<T>& out_ch, detail::WorkerCounters& c, OperatorContext& ctx) {
    Outlet<T> out(out_ch, c);
    while (admit()) {
      std::optional<T> item = op.produce(ctx);
      if (!item) {
        release();
        break;
      }
      item->ingest_ns = monotonic_ns();
      ++c.items_in;
      out.send(std::move(*item));
    }
    out_ch.close();
  }

  void run_transform(const OperatorSpec<T>& op, Channel<T>& in_ch, Channel<T>& out_ch, detail::WorkerCounters& c,
                     OperatorContext& ctx) {
    Inlet<T> in(in_ch, c);
    Outlet<T> out(out_ch, c);
    op.run(in, out, ctx);
    if (!in.ended() && !aborted_) throw ContractError("operator returned before its input ended");
    out_ch.close();
  }

  void run_sink(const OperatorSpec<T>& op, Channel<T>& in_ch, detail::WorkerCounters& c, OperatorContext& ctx) {
    Inlet<T> in(in_ch, c);
    std::optional<uint64_t> last;
    while (auto item = in.receive()) {
      const uint64_t seq = item->seq_id;
      const uint64_t ingest = item->ingest_ns;
      op.consume(std::move(*item), ctx);
      latencies_.push_back(monotonic_ns() - ingest);
      if (last && seq <= *last) ordered_ = false;
      last = seq;
      ++c.items_out;
      sink_count_.fetch_add(1, std::memory_order_relaxed);
      release();
    }
    end_ns_ = monotonic_ns();
  }

  void report_progress() {
    std::unique_lock lock(mu_);
    while (!cv_.wait_for(lock, opts_.progress_interval, [&] { return finished_; })) {
      const uint64_t frames = sink_count_.load(std::memory_order_relaxed);
      const double secs = static_cast<double>(monotonic_ns() - start_ns_) * 1e-9;
      std::string depth;
      for (size_t n = 0; n < g_.channels_.size(); ++n) {
        depth += (n ? "," : "") + std::to_string(g_.channels_[n]->depth());
      }
      char fps[32];
      std::snprintf(fps, sizeof(fps), "%.1f", secs > 0 ? static_cast<double>(frames) / secs : 0.0);
      *opts_.progress << "frames=" << frames << " fps=" << fps << " depth=" << depth << std::endl;
    }
  }

  PipelineStats collect() {
    PipelineStats s;
    for (size_t n = 0; n < g_.ops_.size(); ++n) {
      const auto& c = counters_[n];
      OperatorStats o{g_.ops_[n].name, c.items_in.load(), c.items_out.load(), c.busy_ns, c.idle_ns.load(), 0};
      if (n > 0) o.park_count += g_.channels_[n - 1]->counters().receiver_parks;
      if (n + 1 < g_.ops_.size()) o.park_count += g_.channels_[n]->counters().sender_parks;
      s.operators.push_back(std::move(o));
      if (c.batch_histogram.size() > s.batch_histogram.size()) s.batch_histogram.resize(c.batch_histogram.size(), 0);
      for (size_t b = 0; b < c.batch_histogram.size(); ++b) s.batch_histogram[b] += c.batch_histogram[b];
    }
    for (size_t n = 0; n < g_.channels_.size(); ++n) {
      auto cc = g_.channels_[n]->counters();
      s.edges.push_back({g_.ops_[n].name, g_.ops_[n + 1].name, g_.channels_[n]->capacity(), cc.max_depth,
                         std::move(cc.depth_histogram)});
    }
    s.frames_in = counters_.front().items_out.load();
    s.frames_out = counters_.back().items_in.load();
    const uint64_t end = end_ns_ ? end_ns_ : monotonic_ns();
    s.wall_ns = end - start_ns_;
    s.fps = s.wall_ns ? static_cast<double>(s.frames_out) * 1e9 / static_cast<double>(s.wall_ns) : 0.0;
    s.latency_p50_ns = percentile(latencies_, 50);
    s.latency_p95_ns = percentile(latencies_, 95);
    s.latency_p99_ns = percentile(latencies_, 99);
    s.ordered = ordered_;
    return s;
  }

  PipelineGraph<T>& g_;
  RunOptions opts_;
  std::vector<detail::WorkerCounters> counters_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::atomic<bool> aborted_{false};
  bool finished_ = false;
  uint32_t in_flight_ = 0;
  std::string failed_op_;
  std::exception_ptr error_;
  std::string error_text_;

  uint64_t start_ns_ = 0;
  uint64_t end_ns_ = 0;  // written by the sink worker, read after join
  std::vector<uint64_t> latencies_;
  bool ordered_ = true;
  std::atomic<uint64_t> sink_count_{0};
};

// Runs every operator on its own thread and returns after the sink sees end
// of stream. Any operator failure cancels all channels, joins every worker
// and throws PipelineAborted naming the operator, with the original error
// nested.
template <PipelineItem T>
PipelineStats run_pipeline(PipelineGraph<T>& g, RunOptions opts = {}) {
  return PipelineRun<T>(g, std::move(opts)).run();
}

}  // namespace poseflow
