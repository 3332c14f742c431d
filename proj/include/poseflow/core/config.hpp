// SPDX-License-Identifier: Apache-2.0
#pragma once

// PipelineConfig: every knob of a pose pipeline run, its TOML encoding and
// validation. Unknown TOML keys are rejected so typos cannot silently fall
// back to defaults.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <toml.hpp>

#include "poseflow/core/error.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/parser/params.hpp"
#include "poseflow/scheduler/policy.hpp"
#include "poseflow/synth/params.hpp"

namespace poseflow {

enum class BackendKind { synthetic, tensor_file };

struct BackendSpec {
  BackendKind kind = BackendKind::synthetic;
  // Scene corpus TOML (synthetic; empty = procedural scenes) or dump
  // directory (tensor_file).
  std::string path;
  uint32_t max_batch = 8;
  uint64_t seed = 0;

  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

// "synth", "synth:<corpus.toml>" or "file:<dir>".
inline BackendSpec parse_backend_arg(std::string_view arg, BackendSpec base = {}) {
  auto colon = arg.find(':');
  std::string_view kind = arg.substr(0, colon);
  std::string path = colon == std::string_view::npos ? std::string() : std::string(arg.substr(colon + 1));
  if (kind == "synth") {
    base.kind = BackendKind::synthetic;
  } else if (kind == "file") {
    base.kind = BackendKind::tensor_file;
    if (path.empty()) throw ConfigError("--backend file:<dir> needs a directory");
  } else {
    throw ConfigError("unknown backend '" + std::string(arg) + "' (expected synth[:corpus.toml] or file:<dir>)");
  }
  base.path = path;
  return base;
}

inline std::string backend_arg(const BackendSpec& b) {
  std::string kind = b.kind == BackendKind::synthetic ? "synth" : "file";
  return b.path.empty() ? kind : kind + ":" + b.path;
}

struct PipelineConfig {
  uint32_t input_w = 640;
  uint32_t input_h = 360;
  uint32_t channel_capacity = 8;
  uint64_t frames = 0;  // 0: everything the source has
  uint32_t source_latency_us = 0;
  std::string topology = default_topology_path().string();
  std::string input_dir;  // optional directory of PPM frames

  SchedulerPolicy scheduler;
  ParserParams parser;
  SynthParams synth;
  BackendSpec backend;

  std::string out_dir = "out";
  bool overlay = false;
  bool progress = false;
  std::string dump_maps;  // optional directory for HPT1 dumps of the maps

  uint32_t stride() const { return synth.stride; }

  void validate() const {
    if (input_w < 1 || input_h < 1) throw ConfigError("pipeline.input_w/input_h must be >= 1");
    if (channel_capacity < 1) throw ConfigError("pipeline.channel_capacity must be >= 1");
    synth.validate();
    parser.validate();
    scheduler.validate();
    if (input_w % synth.stride != 0 || input_h % synth.stride != 0) {
      throw ConfigError("input extents " + std::to_string(input_w) + "x" + std::to_string(input_h) +
                        " are not divisible by stride " + std::to_string(synth.stride));
    }
    if (backend.max_batch < 1) throw ConfigError("backend.max_batch must be >= 1");
    if (scheduler.effective_batch_max() > backend.max_batch) {
      throw ConfigError("scheduler.batch_max " + std::to_string(scheduler.batch_max) +
                        " exceeds the backend's max batch " + std::to_string(backend.max_batch));
    }
    if (backend.kind == BackendKind::tensor_file && backend.path.empty()) {
      throw ConfigError("file backend needs a dump directory");
    }
    if (out_dir.empty()) throw ConfigError("output.dir must not be empty");
  }

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

namespace detail {

// Shortest round-trip text for a float, always spelled as a TOML float.
inline std::string toml_float(float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string toml_string(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

// Typed accessors over one TOML table that remember which keys were read,
// so leftovers can be reported as unknown.
class TomlSection {
 public:
  TomlSection(const toml::table* tbl, std::string name) : tbl_(tbl), name_(std::move(name)) {}

  template <typename T>
  void get(const char* key, T& out) {
    if (!tbl_) return;
    seen_.insert(key);
    const toml::node* node = tbl_->get(key);
    if (!node) return;
    const std::string where = name_.empty() ? key : name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      const auto* v = node->as_boolean();
      if (!v) throw ConfigError(where + " must be a boolean");
      out = v->get();
    } else if constexpr (std::is_same_v<T, std::string>) {
      auto v = node->value<std::string>();
      if (!v) throw ConfigError(where + " must be a string");
      out = *v;
    } else if constexpr (std::is_floating_point_v<T>) {
      auto v = node->value<double>();
      if (!v) throw ConfigError(where + " must be a number");
      out = static_cast<T>(*v);
    } else {
      auto v = node->is_integer() ? node->value<int64_t>() : std::nullopt;
      if (!v || *v < 0 || static_cast<uint64_t>(*v) > std::numeric_limits<T>::max()) {
        throw ConfigError(where + " must be a non-negative integer");
      }
      out = static_cast<T>(*v);
    }
  }

  void skip(const char* key) { seen_.insert(key); }

  void reject_unknown() const {
    if (!tbl_) return;
    for (const auto& [k, v] : *tbl_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError("unknown config key '" + (name_.empty() ? "" : name_ + ".") + std::string(k.str()) + "'");
      }
    }
  }

 private:
  const toml::table* tbl_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Overlays the keys present in `tbl` onto `cfg`.
inline void apply_toml(const toml::table& tbl, PipelineConfig& cfg) {
  static const std::set<std::string> kSections = {"pipeline", "scheduler", "parser", "synth", "backend", "output"};
  for (const auto& [k, v] : tbl) {
    if (!kSections.count(std::string(k.str())) || !v.is_table()) {
      throw ConfigError("unknown config section '" + std::string(k.str()) + "'");
    }
  }
  detail::TomlSection p(tbl["pipeline"].as_table(), "pipeline");
  p.get("input_w", cfg.input_w);
  p.get("input_h", cfg.input_h);
  p.get("channel_capacity", cfg.channel_capacity);
  p.get("frames", cfg.frames);
  p.get("source_latency_us", cfg.source_latency_us);
  p.get("topology", cfg.topology);
  p.get("input", cfg.input_dir);
  p.reject_unknown();

  detail::TomlSection s(tbl["scheduler"].as_table(), "scheduler");
  s.get("enabled", cfg.scheduler.enabled);
  s.get("batch_max", cfg.scheduler.batch_max);
  s.get("linger_us", cfg.scheduler.linger_us);
  s.reject_unknown();

  detail::TomlSection pr(tbl["parser"].as_table(), "parser");
  pr.get("conf_threshold", cfg.parser.conf_threshold);
  pr.get("nms_window", cfg.parser.nms_window);
  pr.get("n_samples", cfg.parser.n_samples);
  pr.get("sample_dot_threshold", cfg.parser.sample_dot_threshold);
  pr.get("good_fraction_min", cfg.parser.good_fraction_min);
  pr.get("min_parts", cfg.parser.min_parts);
  pr.get("min_human_score", cfg.parser.min_human_score);
  pr.reject_unknown();

  detail::TomlSection sy(tbl["synth"].as_table(), "synth");
  sy.get("sigma_conf", cfg.synth.sigma_conf);
  sy.get("paf_halfwidth", cfg.synth.paf_halfwidth);
  sy.get("stride", cfg.synth.stride);
  sy.get("service_delay_us", cfg.synth.service_delay_us);
  sy.get("batch_overhead_us", cfg.synth.batch_overhead_us);
  sy.get("per_item_us", cfg.synth.per_item_us);
  sy.reject_unknown();

  detail::TomlSection b(tbl["backend"].as_table(), "backend");
  std::string kind = cfg.backend.kind == BackendKind::synthetic ? "synth" : "file";
  b.get("kind", kind);
  if (kind == "synth") {
    cfg.backend.kind = BackendKind::synthetic;
  } else if (kind == "file") {
    cfg.backend.kind = BackendKind::tensor_file;
  } else {
    throw ConfigError("backend.kind must be \"synth\" or \"file\"");
  }
  b.get("path", cfg.backend.path);
  b.get("max_batch", cfg.backend.max_batch);
  b.get("seed", cfg.backend.seed);
  b.reject_unknown();

  detail::TomlSection o(tbl["output"].as_table(), "output");
  o.get("dir", cfg.out_dir);
  o.get("overlay", cfg.overlay);
  o.get("progress", cfg.progress);
  o.get("dump_maps", cfg.dump_maps);
  o.reject_unknown();
}

inline PipelineConfig parse_config(std::string_view text, PipelineConfig base = {},
                                   const std::string& source = "config") {
  try {
    apply_toml(toml::parse(text, source), base);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source + ": " + std::string(e.description()));
  }
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    apply_toml(toml::parse_file(path.string()), base);
  } catch (const toml::parse_error& e) {
    throw ConfigError(path.string() + ": " + std::string(e.description()));
  } catch (const ConfigError& e) {
    throw ConfigError(with_context(e.what(), path.string()));
  }
  return base;
}

// Fully resolved config as TOML; parse_config(to_toml(c)) == c.
inline std::string to_toml(const PipelineConfig& c) {
  using detail::toml_float;
  using detail::toml_string;
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream os;
  os << "[pipeline]\n"
     << "input_w = " << c.input_w << "\n"
     << "input_h = " << c.input_h << "\n"
     << "channel_capacity = " << c.channel_capacity << "\n"
     << "frames = " << c.frames << "\n"
     << "source_latency_us = " << c.source_latency_us << "\n"
     << "topology = " << toml_string(c.topology) << "\n"
     << "input = " << toml_string(c.input_dir) << "\n\n"
     << "[scheduler]\n"
     << "enabled = " << b(c.scheduler.enabled) << "\n"
     << "batch_max = " << c.scheduler.batch_max << "\n"
     << "linger_us = " << c.scheduler.linger_us << "\n\n"
     << "[parser]\n"
     << "conf_threshold = " << toml_float(c.parser.conf_threshold) << "\n"
     << "nms_window = " << c.parser.nms_window << "\n"
     << "n_samples = " << c.parser.n_samples << "\n"
     << "sample_dot_threshold = " << toml_float(c.parser.sample_dot_threshold) << "\n"
     << "good_fraction_min = " << toml_float(c.parser.good_fraction_min) << "\n"
     << "min_parts = " << c.parser.min_parts << "\n"
     << "min_human_score = " << toml_float(c.parser.min_human_score) << "\n\n"
     << "[synth]\n"
     << "sigma_conf = " << toml_float(c.synth.sigma_conf) << "\n"
     << "paf_halfwidth = " << toml_float(c.synth.paf_halfwidth) << "\n"
     << "stride = " << c.synth.stride << "\n"
     << "service_delay_us = " << c.synth.service_delay_us << "\n"
     << "batch_overhead_us = " << c.synth.batch_overhead_us << "\n"
     << "per_item_us = " << c.synth.per_item_us << "\n\n"
     << "[backend]\n"
     << "kind = " << toml_string(c.backend.kind == BackendKind::synthetic ? "synth" : "file") << "\n"
     << "path = " << toml_string(c.backend.path) << "\n"
     << "max_batch = " << c.backend.max_batch << "\n"
     << "seed = " << c.backend.seed << "\n\n"
     << "[output]\n"
     << "dir = " << toml_string(c.out_dir) << "\n"
     << "overlay = " << b(c.overlay) << "\n"
     << "progress = " << b(c.progress) << "\n"
     << "dump_maps = " << toml_string(c.dump_maps) << "\n";
  return os.str();
}

}  // namespace poseflow
