// SPDX-License-Identifier: Apache-2.0
// poseflow: run the pose pipeline, benchmark scheduler configurations, run
// the built-in oracle checks, or generate scene corpora.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "poseflow/bench/harness.hpp"
#include "poseflow/bench/profile.hpp"
#include "poseflow/cli/selftest.hpp"
#include "poseflow/core/config.hpp"
#include "poseflow/core/error.hpp"
#include "poseflow/operators/pose_pipeline.hpp"
#include "poseflow/synth/scene.hpp"

using namespace poseflow;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kConfigError = 2;

volatile std::sig_atomic_t g_interrupted = 0;

extern "C" void on_sigint(int) { g_interrupted = 1; }

// Turns Ctrl-C into a stop request for the running pipeline.
class InterruptStop {
 public:
  InterruptStop() {
    std::signal(SIGINT, on_sigint);
    poller_ = std::jthread([this](std::stop_token self) {
      while (!self.stop_requested()) {
        if (g_interrupted) {
          source_.request_stop();
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    });
  }
  ~InterruptStop() { std::signal(SIGINT, SIG_DFL); }
  std::stop_token token() const { return source_.get_token(); }

 private:
  std::stop_source source_;
  std::jthread poller_;
};

bool on_off(const std::string& v) { return v == "on"; }

struct RunArgs {
  std::string config;
  std::optional<std::string> backend;
  std::optional<std::string> topology;
  std::optional<uint64_t> frames;
  std::optional<uint32_t> batch_max;
  std::optional<uint32_t> channel_cap;
  std::optional<std::string> scheduler;
  std::optional<uint32_t> linger_us;
  std::optional<uint32_t> source_latency_us;
  std::optional<std::string> out;
  std::optional<std::string> overlay;
  std::optional<std::string> input;
  std::optional<std::string> dump_maps;
  std::string report;
  bool progress = false;
  bool sequential = false;
  bool print_config = false;
};

PipelineConfig resolve(const RunArgs& a) {
  PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_config(a.config);
  if (a.backend) cfg.backend = parse_backend_arg(*a.backend, cfg.backend);
  if (a.topology) cfg.topology = *a.topology;
  if (a.frames) cfg.frames = *a.frames;
  if (a.batch_max) cfg.scheduler.batch_max = *a.batch_max;
  if (a.channel_cap) cfg.channel_capacity = *a.channel_cap;
  if (a.scheduler) cfg.scheduler.enabled = on_off(*a.scheduler);
  if (a.linger_us) cfg.scheduler.linger_us = *a.linger_us;
  if (a.source_latency_us) cfg.source_latency_us = *a.source_latency_us;
  if (a.out) cfg.out_dir = *a.out;
  if (a.overlay) cfg.overlay = on_off(*a.overlay);
  if (a.input) cfg.input_dir = *a.input;
  if (a.dump_maps) cfg.dump_maps = *a.dump_maps;
  if (a.progress) cfg.progress = true;
  cfg.validate();
  return cfg;
}

int cmd_run(const RunArgs& a) {
  PipelineConfig cfg = resolve(a);
  if (a.print_config) {
    std::cout << to_toml(cfg);
    return kOk;
  }
  InterruptStop interrupt;
  PoseRunOptions opts;
  opts.stop = interrupt.token();
  opts.max_in_flight = a.sequential ? 1 : 0;
  PipelineStats stats = run_pose_pipeline(cfg, opts);
  if (!a.report.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(a.report, ec);
    if (ec) throw ConfigError("cannot create report directory " + a.report + ": " + ec.message());
    write_stats_json(std::filesystem::path(a.report) / "stats.json", stats);
  }
  std::printf("frames=%llu fps=%.1f latency_p50_ms=%.2f out=%s\n", static_cast<unsigned long long>(stats.frames_out),
              stats.fps, static_cast<double>(stats.latency_p50_ns) * 1e-6, cfg.out_dir.c_str());
  return kOk;
}

struct BenchArgs {
  std::string profile;
  std::string report;
  std::optional<uint64_t> frames;
  std::optional<uint32_t> repetitions;
  std::optional<uint32_t> channel_cap;
};

int cmd_bench(const BenchArgs& a) {
  BenchProfile p = a.profile.empty() ? default_profile() : load_profile(a.profile);
  if (a.frames) p.frames = *a.frames;
  if (a.repetitions) p.repetitions = *a.repetitions;
  if (a.channel_cap) p.channel_capacity = *a.channel_cap;
  p.validate();
  BenchReport r = run_bench(p, &std::cerr);
  std::cout << format_table(r);
  auto path = write_report(r, a.report);
  std::cout << "report: " << path.string() << "\n";
  return r.ok() ? kOk : kRuntimeFailure;
}

int cmd_selftest(const std::string& topology, uint64_t seed) {
  auto results = run_selftest(topology, seed);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    all = all && r.passed;
  }
  std::cout << (all ? "selftest passed\n" : "selftest FAILED\n");
  return all ? kOk : kRuntimeFailure;
}

struct ScenesArgs {
  uint64_t count = 100;
  uint64_t seed = 1;
  uint32_t width = 640;
  uint32_t height = 360;
  std::string out;
};

int cmd_scenes(const ScenesArgs& a) {
  if (a.count == 0) throw ConfigError("--count must be >= 1");
  SynthParams sp;
  if (a.width % sp.stride != 0 || a.height % sp.stride != 0) {
    throw ConfigError("scene extents must be divisible by stride " + std::to_string(sp.stride));
  }
  SceneCorpus corpus{a.width, a.height, {}};
  for (uint64_t n = 0; n < a.count; ++n) {
    corpus.scenes.emplace_back(n, procedural_scene(scene_seed(a.seed, n), 18, a.width, a.height, sp));
  }
  std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + a.out);
  out << corpus_to_toml(corpus);
  if (!out.flush()) throw Error("I/O failure writing " + a.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poseflow: streaming multi-person pose pipeline"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the pose pipeline");
  run_cmd->add_option("--config", run.config, "TOML config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--backend", run.backend, "synth, synth:<corpus.toml> or file:<dir>");
  run_cmd->add_option("--topology", run.topology, "Skeleton topology TOML");
  run_cmd->add_option("--frames", run.frames, "Frames to process (0: all the source has)");
  run_cmd->add_option("--batch-max", run.batch_max, "Largest inference batch");
  run_cmd->add_option("--channel-cap", run.channel_cap, "Capacity of every inter-operator channel");
  run_cmd->add_option("--scheduler", run.scheduler, "Adaptive batching")->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_option("--linger-us", run.linger_us, "How long an idle device waits for a fuller batch");
  run_cmd->add_option("--source-latency-us", run.source_latency_us, "Emulated per-frame read time");
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--out-overlay", run.overlay, "Write overlay images")->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_option("--input", run.input, "Directory of .ppm frames");
  run_cmd->add_option("--dump-maps", run.dump_maps, "Directory for HPT1 dumps of the feature maps");
  run_cmd->add_option("--report", run.report, "Also write stats.json here");
  run_cmd->add_flag("--progress", run.progress, "Print a progress line every second");
  run_cmd->add_flag("--sequential", run.sequential, "One frame in the pipeline at a time");
  run_cmd->add_flag("--print-config", run.print_config, "Print the resolved config as TOML and exit");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark scheduler configurations");
  bench_cmd->add_option("--profile", bench.profile, "Bench profile TOML (default: built-in)")->check(CLI::ExistingFile);
  bench_cmd->add_option("--report", bench.report, "Directory for report.json")->required();
  bench_cmd->add_option("--frames", bench.frames, "Override the profile's frame count");
  bench_cmd->add_option("--repetitions", bench.repetitions, "Override the profile's repetitions");
  bench_cmd->add_option("--channel-cap", bench.channel_cap, "Override the profile's channel capacity");

  std::string selftest_topology = default_topology_path().string();
  uint64_t selftest_seed = 1;
  auto* self_cmd = app.add_subcommand("selftest", "Run the built-in oracle checks");
  self_cmd->add_option("--topology", selftest_topology, "Skeleton topology TOML");
  self_cmd->add_option("--seed", selftest_seed, "Seed for the randomized checks");

  ScenesArgs scenes;
  auto* scenes_cmd = app.add_subcommand("scenes", "Write a procedural scene corpus for synth:<corpus.toml>");
  scenes_cmd->add_option("--count", scenes.count, "Number of scenes (seq_ids 0..count-1)");
  scenes_cmd->add_option("--seed", scenes.seed, "Base seed");
  scenes_cmd->add_option("--width", scenes.width, "Input width");
  scenes_cmd->add_option("--height", scenes.height, "Input height");
  scenes_cmd->add_option("--out", scenes.out, "Output TOML file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*bench_cmd) return cmd_bench(bench);
    if (*scenes_cmd) return cmd_scenes(scenes);
    return cmd_selftest(selftest_topology, selftest_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << describe_exception(e) << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << describe_exception(e) << "\n";
    return kRuntimeFailure;
  }
}
