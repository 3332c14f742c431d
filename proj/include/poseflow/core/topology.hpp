// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "poseflow/core/error.hpp"

namespace poseflow {

struct Limb {
  uint32_t a = 0;
  uint32_t b = 0;
  friend bool operator==(const Limb&, const Limb&) = default;
};

struct PafChannels {
  uint32_t x = 0;
  uint32_t y = 0;
  friend bool operator==(const PafChannels&, const PafChannels&) = default;
};

// Keypoint names, the limb graph and the PAF channel of each limb. Validated
// on construction; an instance is always well-formed.
class SkeletonTopology {
 public:
  SkeletonTopology(std::string name, std::vector<std::string> keypoints, std::vector<Limb> limbs,
                   std::optional<std::vector<PafChannels>> paf_channels = std::nullopt)
      : name_(std::move(name)), keypoints_(std::move(keypoints)), limbs_(std::move(limbs)) {
    if (paf_channels) {
      paf_ = std::move(*paf_channels);
    } else {
      for (uint32_t l = 0; l < limbs_.size(); ++l) paf_.push_back({2 * l, 2 * l + 1});
    }
    validate();
  }

  const std::string& name() const { return name_; }
  uint32_t keypoint_count() const { return static_cast<uint32_t>(keypoints_.size()); }
  uint32_t limb_count() const { return static_cast<uint32_t>(limbs_.size()); }
  const std::vector<std::string>& keypoint_names() const { return keypoints_; }
  const std::vector<Limb>& limbs() const { return limbs_; }
  const std::vector<PafChannels>& paf_channels() const { return paf_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::optional<uint32_t> index_of(std::string_view keypoint) const {
    for (uint32_t k = 0; k < keypoints_.size(); ++k) {
      if (keypoints_[k] == keypoint) return k;
    }
    return std::nullopt;
  }

  // True iff the limb graph is connected over the keypoints that appear in at
  // least one limb.
  bool connected() const {
    std::vector<uint32_t> parent(keypoints_.size());
    std::iota(parent.begin(), parent.end(), 0u);
    auto find = [&](uint32_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::set<uint32_t> touched;
    for (const Limb& l : limbs_) {
      parent[find(l.a)] = find(l.b);
      touched.insert(l.a);
      touched.insert(l.b);
    }
    std::set<uint32_t> roots;
    for (uint32_t k : touched) roots.insert(find(k));
    return roots.size() <= 1;
  }

  friend bool operator==(const SkeletonTopology& x, const SkeletonTopology& y) {
    return x.keypoints_ == y.keypoints_ && x.limbs_ == y.limbs_ && x.paf_ == y.paf_;
  }

 private:
  void validate() {
    if (keypoints_.empty()) throw ConfigError("topology has no keypoints");
    std::set<std::string> names;
    for (const auto& n : keypoints_) {
      if (n.empty()) throw ConfigError("topology has an empty keypoint name");
      if (!names.insert(n).second) throw ConfigError("duplicate keypoint name '" + n + "'");
    }
    const auto k = keypoints_.size();
    for (size_t l = 0; l < limbs_.size(); ++l) {
      const Limb& limb = limbs_[l];
      if (limb.a >= k || limb.b >= k) {
        throw ConfigError("limb " + std::to_string(l) + " references keypoint " +
                          std::to_string(std::max(limb.a, limb.b)) + " but only " + std::to_string(k) +
                          " keypoints exist");
      }
      if (limb.a == limb.b) {
        throw ConfigError("limb " + std::to_string(l) + " connects keypoint " + std::to_string(limb.a) +
                          " to itself");
      }
    }
    if (paf_.size() != limbs_.size()) {
      throw ConfigError("paf_channels has " + std::to_string(paf_.size()) + " entries for " +
                        std::to_string(limbs_.size()) + " limbs");
    }
    const auto n_channels = 2 * limbs_.size();
    std::set<uint32_t> used;
    for (size_t l = 0; l < paf_.size(); ++l) {
      for (uint32_t c : {paf_[l].x, paf_[l].y}) {
        if (c >= n_channels) {
          throw ConfigError("limb " + std::to_string(l) + " uses PAF channel " + std::to_string(c) +
                            " but only " + std::to_string(n_channels) + " exist");
        }
        if (!used.insert(c).second) {
          throw ConfigError("PAF channel " + std::to_string(c) + " is assigned to more than one limb axis");
        }
      }
    }
    if (!connected()) warnings_.push_back("limb graph of topology '" + name_ + "' is not connected");
  }

  std::string name_;
  std::vector<std::string> keypoints_;
  std::vector<Limb> limbs_;
  std::vector<PafChannels> paf_;
  std::vector<std::string> warnings_;
};

namespace detail {

inline uint32_t toml_index(const toml::node& node, const std::string& where) {
  auto v = node.value<int64_t>();
  if (!v || *v < 0 || *v > std::numeric_limits<uint32_t>::max()) {
    throw ConfigError(where + " must be a non-negative integer");
  }
  return static_cast<uint32_t>(*v);
}

inline std::vector<std::pair<uint32_t, uint32_t>> toml_pairs(const toml::array& arr, const std::string& key) {
  std::vector<std::pair<uint32_t, uint32_t>> out;
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string where = key + "[" + std::to_string(i) + "]";
    const auto* pair = arr[i].as_array();
    if (!pair || pair->size() != 2) throw ConfigError(where + " must be a two-element array");
    out.emplace_back(toml_index((*pair)[0], where), toml_index((*pair)[1], where));
  }
  return out;
}

}  // namespace detail

inline SkeletonTopology topology_from_toml(const toml::table& tbl, const std::string& source = "topology") {
  const auto* kps = tbl["keypoints"].as_array();
  if (!kps) throw ConfigError(source + ": missing 'keypoints' array");
  std::vector<std::string> names;
  for (const auto& n : *kps) {
    auto s = n.value<std::string>();
    if (!s) throw ConfigError(source + ": keypoints must be strings");
    names.push_back(*s);
  }
  const auto* limbs_arr = tbl["limbs"].as_array();
  if (!limbs_arr) throw ConfigError(source + ": missing 'limbs' array");
  std::vector<Limb> limbs;
  for (auto [a, b] : detail::toml_pairs(*limbs_arr, "limbs")) limbs.push_back({a, b});
  std::optional<std::vector<PafChannels>> paf;
  if (const auto* paf_arr = tbl["paf_channels"].as_array()) {
    paf.emplace();
    for (auto [x, y] : detail::toml_pairs(*paf_arr, "paf_channels")) paf->push_back({x, y});
  }
  std::string name = tbl["name"].value_or(std::string("custom"));
  try {
    return SkeletonTopology(std::move(name), std::move(names), std::move(limbs), std::move(paf));
  } catch (const ConfigError& e) {
    throw ConfigError(with_context(e.what(), source));
  }
}

inline SkeletonTopology parse_topology(std::string_view text, const std::string& source = "topology") {
  try {
    return topology_from_toml(toml::parse(text, source), source);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source + ": " + std::string(e.description()));
  }
}

inline SkeletonTopology load_topology(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("topology file not found: " + path.string());
  try {
    return topology_from_toml(toml::parse_file(path.string()), path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(path.string() + ": " + std::string(e.description()));
  }
}

// Directory holding the bundled data files (coco18.toml).
inline std::filesystem::path data_dir() {
#ifdef POSEFLOW_DATA_DIR
  return std::filesystem::path(POSEFLOW_DATA_DIR);
#else
  return std::filesystem::path("data");
#endif
}

inline std::filesystem::path default_topology_path() { return data_dir() / "coco18.toml"; }

}  // namespace poseflow
