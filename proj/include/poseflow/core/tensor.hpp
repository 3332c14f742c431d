// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poseflow/core/error.hpp"

namespace poseflow {

// Product of extents; false on u64 overflow.
inline bool checked_element_count(std::span<const uint32_t> dims, uint64_t& count) {
  count = 1;
  for (uint32_t d : dims) {
    if (d != 0 && count > std::numeric_limits<uint64_t>::max() / d) return false;
    count *= d;
  }
  return true;
}

// Dense row-major float tensor. Extents are outermost first.
class TensorF32 {
 public:
  TensorF32() = default;

  // Zero-filled tensor of the given extents.
  explicit TensorF32(std::vector<uint32_t> dims) : dims_(std::move(dims)) {
    data_.assign(element_count(dims_), 0.0f);
  }

  TensorF32(std::vector<uint32_t> dims, std::vector<float> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != element_count(dims_)) {
      throw ContractError("tensor data length " + std::to_string(data_.size()) +
                          " does not match product of dims " +
                          std::to_string(element_count(dims_)));
    }
  }

  const std::vector<uint32_t>& dims() const { return dims_; }
  uint32_t dim(size_t axis) const { return dims_.at(axis); }
  size_t rank() const { return dims_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  template <typename... Idx>
  float& at(Idx... idx) {
    return data_[offset(idx...)];
  }
  template <typename... Idx>
  float at(Idx... idx) const {
    return data_[offset(idx...)];
  }

  // Contiguous sub-tensor along the outermost axis (e.g. one channel of a
  // [C,H,W] map).
  std::span<const float> slice(uint32_t outer) const {
    size_t inner = dims_.empty() ? 0 : data_.size() / dims_[0];
    return std::span<const float>(data_).subspan(size_t{outer} * inner, inner);
  }
  std::span<float> slice(uint32_t outer) {
    size_t inner = dims_.empty() ? 0 : data_.size() / dims_[0];
    return std::span<float>(data_).subspan(size_t{outer} * inner, inner);
  }

  bool all_finite() const {
    for (float v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Bitwise equality of extents and payload (distinguishes -0.0 from 0.0).
  friend bool operator==(const TensorF32& a, const TensorF32& b) {
    return a.dims_ == b.dims_ && a.data_.size() == b.data_.size() &&
           (a.data_.empty() ||
            std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
  }

  static uint64_t element_count(std::span<const uint32_t> dims) {
    uint64_t n = 0;
    if (!checked_element_count(dims, n)) throw ContractError("tensor dims product overflows u64");
    return n;
  }

 private:
  template <typename... Idx>
  size_t offset(Idx... idx) const {
    static_assert(sizeof...(Idx) >= 1);
    const size_t indices[] = {static_cast<size_t>(idx)...};
    size_t off = 0;
    for (size_t a = 0; a < sizeof...(Idx); ++a) off = off * dims_[a] + indices[a];
    return off;
  }

  std::vector<uint32_t> dims_;
  std::vector<float> data_;
};

}  // namespace poseflow
