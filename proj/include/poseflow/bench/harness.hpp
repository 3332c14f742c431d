// SPDX-License-Identifier: Apache-2.0
#pragma once

// Runs every configuration of a bench profile on live pipelines whose stages
// sleep according to their latency model, and compares the measured FPS
// with the closed form and the simulator.
//
// report.json:
// {"profile":{...},
//  "configs":[{"name","scheduler","batch_max","linger_us","sequential","status":"ok"|"FAILED",
//              "error"?, "fps":{"mean","min","max","runs":[...]},
//              "latency_ns":{"p50","p95","p99"}, "batch_histogram":[...],
//              "max_edge_depth", "ordered", "conserved",
//              "predicted_fps", "simulated_fps",
//              "deviation":{"vs_predicted","vs_simulated"},
//              "speedup":{"<baseline>":{"mean","min"}}}]}

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "poseflow/bench/model.hpp"
#include "poseflow/bench/profile.hpp"
#include "poseflow/dataflow/pipeline.hpp"
#include "poseflow/dataflow/stats.hpp"
#include "poseflow/scheduler/batch_slot.hpp"

namespace poseflow {

struct BenchItem {
  uint64_t seq_id = 0;
  uint64_t ingest_ns = 0;
};

struct Speedup {
  std::string baseline;
  double mean = 0;  // ratio of mean FPS
  double min = 0;   // worst per-repetition ratio
};

struct ConfigReport {
  BenchConfig config;
  bool failed = false;
  std::string error;
  std::vector<double> fps_runs;
  double fps_mean = 0;
  double fps_min = 0;
  double fps_max = 0;
  uint64_t latency_p50_ns = 0;
  uint64_t latency_p95_ns = 0;
  uint64_t latency_p99_ns = 0;
  std::vector<uint64_t> batch_histogram;
  uint32_t max_edge_depth = 0;
  bool ordered = true;
  bool conserved = true;
  ThroughputPrediction predicted;
  double simulated_fps = 0;
  std::vector<Speedup> speedups;

  double deviation_vs_predicted() const { return fps_mean / predicted.config_fps - 1.0; }
  double deviation_vs_simulated() const { return fps_mean / simulated_fps - 1.0; }
};

struct BenchReport {
  BenchProfile profile;
  std::vector<ConfigReport> configs;

  bool ok() const {
    return std::none_of(configs.begin(), configs.end(), [](const ConfigReport& c) { return c.failed; });
  }
  const ConfigReport* find(const std::string& name) const {
    for (const auto& c : configs) {
      if (c.config.name == name) return &c;
    }
    return nullptr;
  }
};

namespace detail {

inline std::vector<OperatorSpec<BenchItem>> bench_operators(const BenchProfile& p, const BenchConfig& c) {
  using clock = std::chrono::steady_clock;
  std::vector<OperatorSpec<BenchItem>> ops;
  auto arrivals = std::make_shared<std::vector<uint64_t>>(arrival_offsets_us(p.source, p.frames));
  ops.push_back(make_source<BenchItem>(
      "source", [n = uint64_t{0}, frames = p.frames, src = p.source, arrivals,
                 base = std::optional<clock::time_point>()](OperatorContext&) mutable -> std::optional<BenchItem> {
        if (n == frames) return std::nullopt;
        const auto now = clock::now();
        if (!base) base = now;
        if (!arrivals->empty()) {
          std::this_thread::sleep_until(*base + std::chrono::microseconds((*arrivals)[n]));
        } else if (src.latency_us > 0) {
          std::this_thread::sleep_until(now + std::chrono::microseconds(src.latency_us));
        }
        return BenchItem{n++, 0};
      }));
  for (const auto& s : p.stages) {
    if (s.batched) {
      ops.push_back(make_batched<BenchItem>(s.name, c.scheduler, [s](std::vector<BenchItem>&& batch) {
        const auto start = clock::now();
        std::this_thread::sleep_until(start + std::chrono::microseconds(s.service_us(
                                                  static_cast<uint32_t>(batch.size()))));
        return std::move(batch);
      }));
    } else {
      ops.push_back(make_map<BenchItem>(s.name, [us = s.latency_us](BenchItem&& it, OperatorContext&) {
        if (us > 0) std::this_thread::sleep_until(clock::now() + std::chrono::microseconds(us));
        return it;
      }));
    }
  }
  ops.push_back(make_sink<BenchItem>("sink", [](BenchItem&&, OperatorContext&) {}));
  return ops;
}

// Requests a stop if `fn` has not returned within `limit`.
template <typename Fn>
auto with_watchdog(std::chrono::seconds limit, Fn fn) {
  std::stop_source stop;
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::thread dog([&] {
    std::unique_lock lock(mu);
    if (!cv.wait_for(lock, limit, [&] { return done; })) stop.request_stop();
  });
  auto finish = [&] {
    {
      std::lock_guard lock(mu);
      done = true;
    }
    cv.notify_all();
    dog.join();
  };
  try {
    auto r = fn(stop.get_token());
    finish();
    return r;
  } catch (...) {
    finish();
    throw;
  }
}

}  // namespace detail

// One live run of a configuration.
inline PipelineStats run_bench_config(const BenchProfile& p, const BenchConfig& c) {
  return detail::with_watchdog(std::chrono::seconds(p.watchdog_s), [&](std::stop_token stop) {
    auto g = build_pipeline<BenchItem>(p.channel_capacity, detail::bench_operators(p, c));
    RunOptions opts;
    opts.max_in_flight = c.sequential ? 1 : 0;
    opts.stop = stop;
    return run_pipeline(g, opts);
  });
}

inline BenchReport run_bench(const BenchProfile& p, std::ostream* log = nullptr) {
  p.validate();
  BenchReport report{p, {}};
  for (const auto& c : p.configs) {
    ConfigReport r;
    r.config = c;
    r.predicted = predict_throughput(p, c);
    r.simulated_fps = simulate_policy(p, c).fps;
    std::vector<uint64_t> p50, p95, p99;
    for (uint32_t rep = 0; rep < p.repetitions && !r.failed; ++rep) {
      try {
        auto st = run_bench_config(p, c);
        r.fps_runs.push_back(st.fps);
        p50.push_back(st.latency_p50_ns);
        p95.push_back(st.latency_p95_ns);
        p99.push_back(st.latency_p99_ns);
        if (st.batch_histogram.size() > r.batch_histogram.size()) r.batch_histogram.resize(st.batch_histogram.size());
        for (size_t b = 0; b < st.batch_histogram.size(); ++b) r.batch_histogram[b] += st.batch_histogram[b];
        r.max_edge_depth = std::max<uint32_t>(r.max_edge_depth, static_cast<uint32_t>(st.max_edge_depth()));
        r.ordered = r.ordered && st.ordered;
        r.conserved = r.conserved && st.conserved() && st.frames_out == p.frames;
        if (log) {
          char line[160];
          std::snprintf(line, sizeof(line), "%s rep %u: %.1f fps\n", c.name.c_str(), rep + 1, st.fps);
          *log << line << std::flush;
        }
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = describe_exception(e);
        if (log) *log << c.name << " rep " << rep + 1 << ": FAILED: " << r.error << "\n" << std::flush;
      }
    }
    if (!r.fps_runs.empty()) {
      r.fps_mean = std::accumulate(r.fps_runs.begin(), r.fps_runs.end(), 0.0) / static_cast<double>(r.fps_runs.size());
      r.fps_min = *std::min_element(r.fps_runs.begin(), r.fps_runs.end());
      r.fps_max = *std::max_element(r.fps_runs.begin(), r.fps_runs.end());
      auto mean = [](const std::vector<uint64_t>& v) {
        return std::accumulate(v.begin(), v.end(), uint64_t{0}) / v.size();
      };
      r.latency_p50_ns = mean(p50);
      r.latency_p95_ns = mean(p95);
      r.latency_p99_ns = mean(p99);
    }
    report.configs.push_back(std::move(r));
  }
  for (auto& r : report.configs) {
    for (const auto& name : r.config.baselines) {
      const ConfigReport* base = report.find(name);
      Speedup s{name, 0, 0};
      if (!r.failed && !base->failed && base->fps_mean > 0) {
        s.mean = r.fps_mean / base->fps_mean;
        s.min = std::numeric_limits<double>::infinity();
        const size_t n = std::min(r.fps_runs.size(), base->fps_runs.size());
        for (size_t k = 0; k < n; ++k) s.min = std::min(s.min, r.fps_runs[k] / base->fps_runs[k]);
      }
      r.speedups.push_back(s);
    }
  }
  return report;
}

inline nlohmann::ordered_json to_json(const BenchProfile& p) {
  nlohmann::ordered_json j;
  j["frames"] = p.frames;
  j["repetitions"] = p.repetitions;
  j["channel_capacity"] = p.channel_capacity;
  j["watchdog_s"] = p.watchdog_s;
  j["source"] = {{"latency_us", p.source.latency_us},
                 {"arrival", p.source.arrival == ArrivalKind::poisson ? "poisson" : "fixed"},
                 {"seed", p.source.seed}};
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : p.stages) {
    nlohmann::ordered_json st{{"name", s.name}};
    if (s.batched) {
      st["overhead_us"] = s.overhead_us;
      st["per_item_us"] = s.per_item_us;
    } else {
      st["latency_us"] = s.latency_us;
    }
    j["stages"].push_back(st);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["profile"] = to_json(r.profile);
  j["configs"] = nlohmann::ordered_json::array();
  for (const auto& c : r.configs) {
    nlohmann::ordered_json e;
    e["name"] = c.config.name;
    e["scheduler"] = c.config.scheduler.enabled;
    e["batch_max"] = c.config.scheduler.batch_max;
    e["linger_us"] = c.config.scheduler.linger_us;
    e["sequential"] = c.config.sequential;
    e["status"] = c.failed ? "FAILED" : "ok";
    if (c.failed) e["error"] = c.error;
    e["fps"] = {{"mean", c.fps_mean}, {"min", c.fps_min}, {"max", c.fps_max}, {"runs", c.fps_runs}};
    e["latency_ns"] = {{"p50", c.latency_p50_ns}, {"p95", c.latency_p95_ns}, {"p99", c.latency_p99_ns}};
    e["batch_histogram"] = c.batch_histogram;
    e["max_edge_depth"] = c.max_edge_depth;
    e["ordered"] = c.ordered;
    e["conserved"] = c.conserved;
    e["predicted_fps"] = c.predicted.config_fps;
    e["bottleneck"] = c.predicted.bottleneck;
    e["simulated_fps"] = c.simulated_fps;
    e["deviation"] = {{"vs_predicted", c.failed ? 0.0 : c.deviation_vs_predicted()},
                      {"vs_simulated", c.failed ? 0.0 : c.deviation_vs_simulated()}};
    e["speedup"] = nlohmann::ordered_json::object();
    for (const auto& s : c.speedups) e["speedup"][s.baseline] = {{"mean", s.mean}, {"min", s.min}};
    j["configs"].push_back(std::move(e));
  }
  return j;
}

inline std::string format_table(const BenchReport& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %8s %8s %8s %8s %9s %9s %7s  %s\n", "config", "fps", "min", "max",
                "p50 ms", "predicted", "simulated", "dev", "speedup");
  out += line;
  for (const auto& c : r.configs) {
    std::string speed;
    for (const auto& s : c.speedups) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%sx%.2f vs %s", speed.empty() ? "" : ", ", s.mean, s.baseline.c_str());
      speed += buf;
    }
    if (c.failed) {
      std::snprintf(line, sizeof(line), "%-16s FAILED: %s\n", c.config.name.c_str(), c.error.c_str());
    } else {
      std::snprintf(line, sizeof(line), "%-16s %8.1f %8.1f %8.1f %8.2f %9.1f %9.1f %+6.1f%%  %s\n",
                    c.config.name.c_str(), c.fps_mean, c.fps_min, c.fps_max,
                    static_cast<double>(c.latency_p50_ns) * 1e-6, c.predicted.config_fps, c.simulated_fps,
                    100.0 * c.deviation_vs_simulated(), speed.c_str());
    }
    out += line;
  }
  return out;
}

inline std::filesystem::path write_report(const BenchReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create report directory " + dir.string() + ": " + ec.message());
  const auto path = dir / "report.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(r).dump(2) << "\n";
  return path;
}

}  // namespace poseflow
