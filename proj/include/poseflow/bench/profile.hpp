// SPDX-License-Identifier: Apache-2.0
#pragma once

// Benchmark profiles: per-stage latency models, the frame source, and the
// scheduler configurations to sweep.
//
//   frames = 1000
//   repetitions = 3
//   channel_capacity = 8
//   watchdog_s = 30
//   [source]
//   latency_us = 0
//   arrival = "fixed"          # or "poisson" (mean gap latency_us)
//   seed = 1
//   [[stage]]
//   name = "infer"
//   overhead_us = 8000         # batched stage: overhead + per item
//   per_item_us = 1000
//   [[stage]]
//   name = "post"
//   latency_us = 6000          # fixed stage
//   [[config]]
//   name = "scheduler"
//   scheduler = true
//   batch_max = 8
//   linger_us = 0
//   sequential = false
//   baselines = ["operators"]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "poseflow/core/config.hpp"
#include "poseflow/core/error.hpp"
#include "poseflow/scheduler/policy.hpp"

namespace poseflow {

enum class ArrivalKind { fixed, poisson };

struct SourceModel {
  uint32_t latency_us = 0;  // fixed: per-frame read time; poisson: mean gap
  ArrivalKind arrival = ArrivalKind::fixed;
  uint64_t seed = 1;
};

struct StageModel {
  std::string name;
  bool batched = false;
  uint32_t latency_us = 0;   // fixed stages
  uint32_t overhead_us = 0;  // batched stages
  uint32_t per_item_us = 0;

  // Service time of one dispatch of b items.
  uint64_t service_us(uint32_t b) const {
    return batched ? overhead_us + uint64_t{b} * per_item_us : latency_us;
  }
};

struct BenchConfig {
  std::string name;
  SchedulerPolicy scheduler;
  bool sequential = false;  // one frame in the chain at a time
  std::vector<std::string> baselines;
};

struct BenchProfile {
  uint64_t frames = 1000;
  uint32_t repetitions = 3;
  uint32_t channel_capacity = 8;
  uint32_t watchdog_s = 30;
  SourceModel source;
  std::vector<StageModel> stages;
  std::vector<BenchConfig> configs;

  void validate() const {
    if (frames < 100) throw ConfigError("bench frames must be >= 100, got " + std::to_string(frames));
    if (repetitions < 3) throw ConfigError("bench repetitions must be >= 3, got " + std::to_string(repetitions));
    if (channel_capacity < 1) throw ConfigError("bench channel_capacity must be >= 1");
    if (watchdog_s < 1) throw ConfigError("bench watchdog_s must be >= 1");
    if (stages.empty()) throw ConfigError("bench profile needs at least one [[stage]]");
    size_t batched = 0;
    std::set<std::string> stage_names;
    for (const auto& s : stages) {
      if (s.name.empty()) throw ConfigError("bench stage without a name");
      if (!stage_names.insert(s.name).second) throw ConfigError("duplicate bench stage '" + s.name + "'");
      batched += s.batched;
    }
    if (batched > 1) throw ConfigError("bench profiles support at most one batched stage");
    if (configs.empty()) throw ConfigError("bench profile needs at least one [[config]]");
    std::set<std::string> names;
    for (const auto& c : configs) {
      if (c.name.empty()) throw ConfigError("bench config without a name");
      if (!names.insert(c.name).second) throw ConfigError("duplicate bench config '" + c.name + "'");
      c.scheduler.validate();
    }
    for (const auto& c : configs) {
      for (const auto& b : c.baselines) {
        if (!names.count(b)) throw ConfigError("config '" + c.name + "' names unknown baseline '" + b + "'");
      }
    }
  }
};

inline BenchProfile profile_from_toml(const toml::table& tbl) {
  BenchProfile p;
  detail::TomlSection top(&tbl, "");
  top.get("frames", p.frames);
  top.get("repetitions", p.repetitions);
  top.get("channel_capacity", p.channel_capacity);
  top.get("watchdog_s", p.watchdog_s);
  top.skip("source");
  top.skip("stage");
  top.skip("config");
  top.reject_unknown();

  if (auto node = tbl["source"]; node) {
    if (!node.is_table()) throw ConfigError("[source] must be a table");
    detail::TomlSection s(node.as_table(), "source");
    s.get("latency_us", p.source.latency_us);
    std::string arrival = "fixed";
    s.get("arrival", arrival);
    if (arrival == "fixed") {
      p.source.arrival = ArrivalKind::fixed;
    } else if (arrival == "poisson") {
      p.source.arrival = ArrivalKind::poisson;
    } else {
      throw ConfigError("source.arrival must be \"fixed\" or \"poisson\"");
    }
    s.get("seed", p.source.seed);
    s.reject_unknown();
  }

  auto each = [&](const char* key, auto fn) {
    auto node = tbl[key];
    if (!node) return;
    const auto* arr = node.as_array();
    if (!arr) throw ConfigError(std::string("[[") + key + "]] must be an array of tables");
    for (size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      if (!t) throw ConfigError(std::string("[[") + key + "]] must be an array of tables");
      detail::TomlSection sec(t, std::string(key) + "[" + std::to_string(i) + "]");
      fn(sec, *t);
      sec.reject_unknown();
    }
  };
  each("stage", [&](detail::TomlSection& s, const toml::table& t) {
    StageModel m;
    s.get("name", m.name);
    s.get("latency_us", m.latency_us);
    s.get("overhead_us", m.overhead_us);
    s.get("per_item_us", m.per_item_us);
    m.batched = t.contains("overhead_us") || t.contains("per_item_us");
    if (m.batched && t.contains("latency_us")) {
      throw ConfigError("stage '" + m.name + "' mixes latency_us with overhead_us/per_item_us");
    }
    p.stages.push_back(m);
  });
  each("config", [&](detail::TomlSection& s, const toml::table& t) {
    BenchConfig c;
    s.get("name", c.name);
    s.get("scheduler", c.scheduler.enabled);
    s.get("batch_max", c.scheduler.batch_max);
    s.get("linger_us", c.scheduler.linger_us);
    s.get("sequential", c.sequential);
    s.skip("baselines");
    if (auto b = t["baselines"]; b) {
      const auto* arr = b.as_array();
      if (!arr) throw ConfigError("config '" + c.name + "': baselines must be an array of names");
      for (const auto& e : *arr) {
        auto v = e.value<std::string>();
        if (!v) throw ConfigError("config '" + c.name + "': baselines must be an array of names");
        c.baselines.push_back(*v);
      }
    }
    p.configs.push_back(c);
  });
  p.validate();
  return p;
}

inline BenchProfile parse_profile(const std::string& text, const std::string& source = "<profile>") {
  try {
    return profile_from_toml(toml::parse(text, source));
  } catch (const toml::parse_error& e) {
    throw ConfigError(source + ": " + std::string(e.description()));
  } catch (const ConfigError& e) {
    throw ConfigError(with_context(e.what(), source));
  }
}

inline BenchProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("bench profile not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str(), path.string());
}

// Mirrors the analog of the scheduler comparison: saturating source, a
// batched inference stage with heavy per-call overhead.
inline BenchProfile default_profile() {
  BenchProfile p;
  p.stages = {{"resize", false, 4000, 0, 0}, {"infer", true, 0, 8000, 1000}, {"post", false, 6000, 0, 0}};
  p.configs = {{"sequential", SchedulerPolicy{false, 1, 0}, true, {}},
               {"operators", SchedulerPolicy{false, 1, 0}, false, {"sequential"}},
               {"scheduler", SchedulerPolicy{true, 8, 0}, false, {"operators", "sequential"}}};
  return p;
}

}  // namespace poseflow
