// SPDX-License-Identifier: Apache-2.0
#pragma once

// Bilinear resize with half-pixel centers, HWC -> CHW.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/tensor.hpp"

namespace poseflow {

namespace detail {

struct Tap {
  uint32_t lo = 0;
  uint32_t hi = 0;
  float w = 0;  // weight of hi
};

// Source taps for each destination index along one axis.
inline std::vector<Tap> bilinear_taps(uint32_t in, uint32_t out) {
  std::vector<Tap> taps(out);
  const float scale = static_cast<float>(in) / static_cast<float>(out);
  for (uint32_t d = 0; d < out; ++d) {
    float src = (static_cast<float>(d) + 0.5f) * scale - 0.5f;
    src = std::clamp(src, 0.0f, static_cast<float>(in - 1));
    const auto lo = static_cast<uint32_t>(std::floor(src));
    taps[d] = {lo, std::min(lo + 1, in - 1), src - static_cast<float>(lo)};
  }
  return taps;
}

}  // namespace detail

// image: [H, W, C]; returns [C, out_h, out_w].
inline TensorF32 resize_to_chw(const TensorF32& image, uint32_t out_h, uint32_t out_w) {
  if (image.rank() != 3) throw ContractError("resize expects an [H, W, C] image");
  const uint32_t h = image.dim(0);
  const uint32_t w = image.dim(1);
  const uint32_t c = image.dim(2);
  if (h == 0 || w == 0 || c == 0) throw ContractError("cannot resize a zero-area image");
  if (out_h == 0 || out_w == 0) throw ContractError("resize target must be non-empty");

  TensorF32 out({c, out_h, out_w});
  auto src = image.data();
  auto& dst = out.values();
  auto px = [&](uint32_t y, uint32_t x, uint32_t ch) { return src[(size_t{y} * w + x) * c + ch]; };

  if (h == out_h && w == out_w) {
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t x = 0; x < w; ++x) {
        for (uint32_t ch = 0; ch < c; ++ch) dst[(size_t{ch} * h + y) * w + x] = px(y, x, ch);
      }
    }
    return out;
  }

  const auto ty = detail::bilinear_taps(h, out_h);
  const auto tx = detail::bilinear_taps(w, out_w);
  for (uint32_t ch = 0; ch < c; ++ch) {
    for (uint32_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (uint32_t x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const float top = px(a.lo, b.lo, ch) + b.w * (px(a.lo, b.hi, ch) - px(a.lo, b.lo, ch));
        const float bottom = px(a.hi, b.lo, ch) + b.w * (px(a.hi, b.hi, ch) - px(a.hi, b.lo, ch));
        dst[(size_t{ch} * out_h + y) * out_w + x] = top + a.w * (bottom - top);
      }
    }
  }
  return out;
}

}  // namespace poseflow
