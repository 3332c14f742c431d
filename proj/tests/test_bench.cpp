// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "poseflow/bench/harness.hpp"
#include "poseflow/bench/model.hpp"
#include "poseflow/bench/profile.hpp"
#include "test_util.hpp"

using poseflow::testing_util::expect_throw_containing;

using namespace poseflow;

namespace {

StageModel fixed(std::string name, uint32_t us) { return {std::move(name), false, us, 0, 0}; }
StageModel batched(std::string name, uint32_t overhead, uint32_t per_item) {
  return {std::move(name), true, 0, overhead, per_item};
}
BenchConfig config(std::string name, bool scheduler, uint32_t batch_max, bool sequential = false,
                   uint32_t linger_us = 0) {
  return {std::move(name), SchedulerPolicy{scheduler, batch_max, linger_us}, sequential, {}};
}

BenchProfile profile(std::vector<StageModel> stages, uint64_t frames = 1000) {
  BenchProfile p;
  p.frames = frames;
  p.stages = std::move(stages);
  p.configs = {config("operators", false, 1)};
  return p;
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * want; }

}  // namespace

TEST(PredictThroughput, ClosedForms) {
  auto p = profile({fixed("a", 3000), fixed("b", 6000), fixed("c", 9000)});
  auto seq = predict_throughput(p, config("seq", false, 1, true));
  EXPECT_NEAR(seq.sequential_fps, 1e6 / 18000.0, 1e-9);
  EXPECT_NEAR(seq.config_fps, seq.sequential_fps, 1e-9);
  auto pipe = predict_throughput(p, config("pipe", false, 1));
  EXPECT_NEAR(pipe.config_fps, 1e6 / 9000.0, 1e-9);
  EXPECT_EQ(pipe.bottleneck, "c");
}

TEST(PredictThroughput, BatchedStageAmortizesOverhead) {
  auto p = profile({fixed("resize", 4000), batched("infer", 8000, 1000), fixed("post", 6000)});
  auto off = predict_throughput(p, config("off", false, 8));
  EXPECT_NEAR(off.config_fps, 1e6 / 9000.0, 1e-9);
  EXPECT_EQ(off.bottleneck, "infer");
  auto on = predict_throughput(p, config("on", true, 8));
  EXPECT_NEAR(on.config_fps, 1e6 / 6000.0, 1e-9);
  EXPECT_EQ(on.bottleneck, "post");
  auto alone = profile({batched("infer", 8000, 1000)});
  EXPECT_NEAR(predict_throughput(alone, config("on", true, 4)).config_fps, 4e6 / 12000.0, 1e-9);
}

TEST(SimulatePolicy, FixedStagesMatchClosedForm) {
  auto p = profile({fixed("a", 3000), fixed("b", 6000), fixed("c", 9000)});
  for (const auto& c : {config("seq", false, 1, true), config("pipe", false, 1)}) {
    auto sim = simulate_policy(p, c);
    EXPECT_EQ(sim.frames, p.frames);
    EXPECT_TRUE(within(sim.fps, predict_throughput(p, c).config_fps, 0.01)) << c.name << " " << sim.fps;
  }
  // Sequential: every frame spends exactly the stage sum in the chain.
  auto seq = simulate_policy(p, config("seq", false, 1, true));
  EXPECT_EQ(seq.makespan_us, p.frames * 18000);
  for (auto l : seq.latency_us) EXPECT_EQ(l, 18000u);
}

TEST(SimulatePolicy, BatchMaxOneMatchesClosedForm) {
  for (uint32_t src : {0u, 5000u, 12000u}) {
    auto p = profile({fixed("resize", 4000), batched("infer", 8000, 1000), fixed("post", 6000)});
    p.source.latency_us = src;
    for (bool sched : {false, true}) {
      auto c = config("b1", sched, 1);
      EXPECT_TRUE(within(simulate_policy(p, c).fps, predict_throughput(p, c).config_fps, 0.01)) << src;
    }
  }
}

TEST(SimulatePolicy, SaturatedDeviceFillsBatches) {
  auto p = profile({batched("infer", 8000, 1000)});
  auto sim = simulate_policy(p, config("on", true, 8));
  ASSERT_GT(sim.batch_histogram.size(), 8u);
  uint64_t items = 0;
  for (size_t b = 0; b < sim.batch_histogram.size(); ++b) items += b * sim.batch_histogram[b];
  EXPECT_EQ(items, p.frames);
  EXPECT_GT(sim.batch_histogram[8] * 8, p.frames * 9 / 10);
  EXPECT_TRUE(within(sim.fps, 8e6 / 16000.0, 0.02)) << sim.fps;
}

TEST(SimulatePolicy, IdleDeviceDispatchesImmediately) {
  auto p = profile({batched("infer", 1000, 100)}, 200);
  p.source.latency_us = 5000;
  auto sim = simulate_policy(p, config("on", true, 8));
  ASSERT_EQ(sim.batch_histogram.size(), 2u);
  EXPECT_EQ(sim.batch_histogram[1], p.frames);
  for (auto l : sim.latency_us) EXPECT_EQ(l, 1100u);
}

TEST(SimulatePolicy, LingerWaitsForFullBatch) {
  auto p = profile({batched("infer", 1000, 100)}, 200);
  p.source.latency_us = 1000;
  auto c = config("linger", true, 4, false, 10000);
  auto sim = simulate_policy(p, c);
  ASSERT_EQ(sim.batch_histogram.size(), 5u);
  EXPECT_EQ(sim.batch_histogram[4], 50u);
  // First frame of each batch waits for three more arrivals.
  EXPECT_EQ(sim.latency_us[0], 3000u + 1400u);
  auto short_linger = simulate_policy(p, config("short", true, 4, false, 1500));
  EXPECT_EQ(short_linger.batch_histogram[2], 100u);
}

TEST(SimulatePolicy, BoundsDepthAndConserves) {
  auto p = profile({fixed("fast", 100), fixed("slow", 5000)}, 300);
  p.channel_capacity = 3;
  auto sim = simulate_policy(p, config("pipe", false, 1));
  EXPECT_EQ(sim.frames, 300u);
  for (auto d : sim.max_depth) EXPECT_LE(d, 3u);
  EXPECT_EQ(sim.max_depth[1], 3u);
}

TEST(SimulatePolicy, PoissonArrivalsAreSeeded) {
  auto p = profile({batched("infer", 8000, 1000)});
  p.source = {4500, ArrivalKind::poisson, 7};
  auto a = simulate_policy(p, config("on", true, 8));
  auto b = simulate_policy(p, config("on", true, 8));
  EXPECT_EQ(a.makespan_us, b.makespan_us);
  EXPECT_EQ(a.latency_us, b.latency_us);
  p.source.seed = 8;
  EXPECT_NE(simulate_policy(p, config("on", true, 8)).makespan_us, a.makespan_us);
  auto gaps = arrival_offsets_us(p.source, 20000);
  EXPECT_TRUE(within(static_cast<double>(gaps.back()) / 20000.0, 4500.0, 0.03));
}

TEST(BenchLive, TracksSimulator) {
  auto p = profile({fixed("resize", 2000), batched("infer", 4000, 500), fixed("post", 3000)}, 150);
  for (const auto& c : {config("seq", false, 1, true), config("off", false, 1), config("on", true, 8)}) {
    auto st = run_bench_config(p, c);
    const double sim = simulate_policy(p, c).fps;
    EXPECT_TRUE(within(st.fps, sim, 0.25)) << c.name << " live " << st.fps << " sim " << sim;
    EXPECT_TRUE(st.ordered);
    EXPECT_TRUE(st.conserved());
  }
}

TEST(BenchLive, PoissonArrivalsTrackSimulator) {
  // Arrivals at twice the device's single-item service rate.
  auto p = profile({batched("infer", 8000, 1000)}, 300);
  p.source = {4500, ArrivalKind::poisson, 3};
  auto c = config("on", true, 8);
  auto st = run_bench_config(p, c);
  const double sim = simulate_policy(p, c).fps;
  EXPECT_TRUE(within(st.fps, sim, 0.25)) << "live " << st.fps << " sim " << sim;
}

TEST(BenchProfileToml, ParsesAndValidates) {
  auto p = parse_profile(R"(
frames = 200
repetitions = 3
channel_capacity = 4
[source]
latency_us = 1000
arrival = "poisson"
seed = 9
[[stage]]
name = "infer"
overhead_us = 8000
per_item_us = 1000
[[stage]]
name = "post"
latency_us = 6000
[[config]]
name = "off"
scheduler = false
[[config]]
name = "on"
batch_max = 8
linger_us = 100
baselines = ["off"]
)");
  EXPECT_EQ(p.frames, 200u);
  EXPECT_EQ(p.channel_capacity, 4u);
  EXPECT_EQ(p.source.arrival, ArrivalKind::poisson);
  EXPECT_EQ(p.source.seed, 9u);
  ASSERT_EQ(p.stages.size(), 2u);
  EXPECT_TRUE(p.stages[0].batched);
  EXPECT_EQ(p.stages[0].service_us(3), 11000u);
  EXPECT_FALSE(p.stages[1].batched);
  ASSERT_EQ(p.configs.size(), 2u);
  EXPECT_FALSE(p.configs[0].scheduler.enabled);
  EXPECT_TRUE(p.configs[1].scheduler.enabled);
  EXPECT_EQ(p.configs[1].scheduler.linger_us, 100u);
  EXPECT_EQ(p.configs[1].baselines, std::vector<std::string>{"off"});
}

TEST(BenchProfileToml, RejectsBadProfiles) {
  const std::string body = "[[stage]]\nname = \"a\"\nlatency_us = 10\n[[config]]\nname = \"c\"\n";
  EXPECT_NO_THROW(parse_profile(body));
  expect_throw_containing<ConfigError>([&] { parse_profile("frames = 0\n" + body); }, "frames must be >= 100");
  expect_throw_containing<ConfigError>([&] { parse_profile("repetitions = 1\n" + body); },
                                       "repetitions must be >= 3");
  expect_throw_containing<ConfigError>([&] { parse_profile("framez = 100\n" + body); }, "unknown config key 'framez'");
  expect_throw_containing<ConfigError>([&] { parse_profile("[[config]]\nname = \"c\"\n"); }, "at least one [[stage]]");
  expect_throw_containing<ConfigError>([&] { parse_profile(body + "baselines = [\"nope\"]\n"); },
                                       "unknown baseline 'nope'");
  expect_throw_containing<ConfigError>(
      [&] { parse_profile("[[stage]]\nname = \"a\"\nlatency_us = 1\nper_item_us = 2\n[[config]]\nname = \"c\"\n"); },
      "mixes latency_us");
  expect_throw_containing<ConfigError>([&] { parse_profile("[source]\narrival = \"bursty\"\n" + body); },
                                       "source.arrival");
  expect_throw_containing<ConfigError>([&] { load_profile("/nonexistent/profile.toml"); }, "not found");
}

TEST(BenchReport, WatchdogMarksConfigFailed) {
  auto p = profile({fixed("slow", 50000)}, 100);
  p.watchdog_s = 1;
  p.configs = {config("stuck", false, 1)};
  auto r = run_bench(p);
  ASSERT_EQ(r.configs.size(), 1u);
  EXPECT_TRUE(r.configs[0].failed);
  EXPECT_FALSE(r.ok());
  EXPECT_NE(r.configs[0].error.find("stopped externally"), std::string::npos) << r.configs[0].error;
  EXPECT_EQ(to_json(r)["configs"][0]["status"], "FAILED");
  EXPECT_NE(format_table(r).find("FAILED"), std::string::npos);
}

TEST(BenchReport, SpeedupsAndJson) {
  auto p = profile({fixed("a", 1000), fixed("b", 2000)}, 100);
  p.configs = {config("seq", false, 1, true), config("pipe", false, 1)};
  p.configs[1].baselines = {"seq"};
  auto r = run_bench(p);
  ASSERT_TRUE(r.ok());
  const auto* pipe = r.find("pipe");
  ASSERT_NE(pipe, nullptr);
  EXPECT_EQ(pipe->fps_runs.size(), 3u);
  ASSERT_EQ(pipe->speedups.size(), 1u);
  EXPECT_GT(pipe->speedups[0].min, 1.2);
  EXPECT_LE(pipe->speedups[0].min, pipe->speedups[0].mean + 1e-12);
  EXPECT_TRUE(pipe->ordered);
  EXPECT_TRUE(pipe->conserved);

  auto dir = std::filesystem::temp_directory_path() / "poseflow_bench_report";
  std::filesystem::remove_all(dir);
  auto path = write_report(r, dir);
  std::ifstream in(path);
  auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["profile"]["frames"], 100);
  EXPECT_EQ(j["configs"][1]["name"], "pipe");
  EXPECT_EQ(j["configs"][1]["status"], "ok");
  EXPECT_EQ(j["configs"][1]["fps"]["runs"].size(), 3u);
  EXPECT_TRUE(j["configs"][1]["speedup"].contains("seq"));
  EXPECT_TRUE(j["configs"][1]["deviation"].contains("vs_simulated"));
  auto table = format_table(r);
  EXPECT_NE(table.find("pipe"), std::string::npos);
  EXPECT_NE(table.find("vs seq"), std::string::npos);
  std::filesystem::remove_all(dir);
}
