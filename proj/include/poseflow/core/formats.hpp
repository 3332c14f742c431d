// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary tensor (HPT1) and image (binary PPM, P6) serialization.
//
// HPT1 layout: 'H' 'P' 'T' '1', u8 ndim, ndim x u32 LE extents, then the
// payload as f32 LE in row-major order. All integers are little-endian
// regardless of host byte order.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "poseflow/core/error.hpp"
#include "poseflow/core/tensor.hpp"

namespace poseflow {

inline constexpr std::array<char, 4> kHpt1Magic = {'H', 'P', 'T', '1'};

namespace detail {

inline void put_u32_le(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

inline uint32_t get_u32_le(const unsigned char* b) {
  return uint32_t{b[0]} | (uint32_t{b[1]} << 8) | (uint32_t{b[2]} << 16) | (uint32_t{b[3]} << 24);
}

inline void read_exact(std::istream& in, void* dst, size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw FormatError(std::string("truncated stream while reading ") + what);
  }
}

}  // namespace detail

inline size_t hpt1_size(const TensorF32& t) { return 4 + 1 + 4 * t.rank() + 4 * t.size(); }

// Returns the number of bytes written.
inline size_t write_tensor(const TensorF32& t, std::ostream& out) {
  if (t.rank() > 255) throw ContractError("HPT1 supports at most 255 dims");
  out.write(kHpt1Magic.data(), 4);
  out.put(static_cast<char>(t.rank()));
  for (uint32_t d : t.dims()) detail::put_u32_le(out, d);
  for (float v : t.data()) detail::put_u32_le(out, std::bit_cast<uint32_t>(v));
  if (!out) throw Error("I/O failure while writing HPT1 tensor");
  return hpt1_size(t);
}

inline TensorF32 read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  detail::read_exact(in, magic.data(), 4, "HPT1 magic");
  if (magic != kHpt1Magic) throw FormatError("bad HPT1 magic");
  unsigned char ndim = 0;
  detail::read_exact(in, &ndim, 1, "HPT1 rank");
  std::vector<unsigned char> raw_dims(size_t{ndim} * 4);
  detail::read_exact(in, raw_dims.data(), raw_dims.size(), "HPT1 dims");
  std::vector<uint32_t> dims(ndim);
  for (size_t i = 0; i < ndim; ++i) dims[i] = detail::get_u32_le(&raw_dims[i * 4]);
  uint64_t count = 0;
  if (!checked_element_count(dims, count) || count > std::numeric_limits<uint64_t>::max() / 4) {
    throw FormatError("HPT1 dims product overflows");
  }
  // Read in bounded chunks so a forged header cannot force a huge allocation
  // before the payload proves to be there.
  std::vector<float> data;
  constexpr uint64_t kChunk = 1 << 16;
  std::vector<unsigned char> buf;
  for (uint64_t done = 0; done < count;) {
    uint64_t n = std::min(kChunk, count - done);
    buf.resize(n * 4);
    detail::read_exact(in, buf.data(), buf.size(), "HPT1 payload");
    for (uint64_t i = 0; i < n; ++i) {
      data.push_back(std::bit_cast<float>(detail::get_u32_le(&buf[i * 4])));
    }
    done += n;
  }
  return TensorF32(std::move(dims), std::move(data));
}

inline size_t save_tensor(const TensorF32& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(with_context("cannot open for writing", path.string()));
  try {
    size_t n = write_tensor(t, out);
    out.flush();
    if (!out) throw Error("I/O failure");
    return n;
  } catch (const Error& e) {
    throw Error(with_context(e.what(), path.string()));
  }
}

inline TensorF32 load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(with_context("cannot open for reading", path.string()));
  try {
    return read_tensor(in);
  } catch (const FormatError& e) {
    throw FormatError(with_context(e.what(), path.string()));
  }
}

// ---------------------------------------------------------------------------
// PPM (P6, maxval 255)

namespace detail {

// Next whitespace-delimited header token, skipping '#' comments.
inline std::string ppm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw FormatError("truncated PPM header");
  // The terminating whitespace byte is consumed. After maxval that is the
  // single separator before the raster.
  return tok;
}

inline uint32_t ppm_number(std::istream& in, const char* what) {
  std::string tok = ppm_token(in);
  uint64_t v = 0;
  for (char ch : tok) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) {
      throw FormatError(std::string("bad PPM ") + what + ": " + tok);
    }
    v = v * 10 + static_cast<uint64_t>(ch - '0');
    if (v > std::numeric_limits<uint32_t>::max()) throw FormatError(std::string("PPM ") + what + " too large");
  }
  return static_cast<uint32_t>(v);
}

}  // namespace detail

// v in [0,1] -> byte, round half away from zero, clamped.
inline uint8_t quantize_u8(float v) {
  float scaled = v * 255.0f;
  if (!(scaled > 0.0f)) return 0;  // also maps NaN to 0
  if (scaled >= 255.0f) return 255;
  return static_cast<uint8_t>(std::lround(scaled));
}

inline TensorF32 read_ppm(std::istream& in) {
  if (detail::ppm_token(in) != "P6") throw FormatError("not a binary PPM (P6)");
  uint32_t w = detail::ppm_number(in, "width");
  uint32_t h = detail::ppm_number(in, "height");
  uint32_t maxval = detail::ppm_number(in, "maxval");
  if (maxval != 255) throw FormatError("unsupported PPM maxval " + std::to_string(maxval));
  if (w == 0 || h == 0) throw FormatError("PPM has zero area");
  TensorF32 image({h, w, 3});
  std::vector<unsigned char> raster(image.size());
  detail::read_exact(in, raster.data(), raster.size(), "PPM raster");
  auto px = image.data();
  for (size_t i = 0; i < raster.size(); ++i) px[i] = static_cast<float>(raster[i]) / 255.0f;
  return image;
}

inline size_t write_ppm(const TensorF32& image, std::ostream& out) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ContractError("write_ppm expects an [H, W, 3] image");
  }
  std::string header = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<char> raster(image.size());
  auto px = image.data();
  for (size_t i = 0; i < raster.size(); ++i) raster[i] = static_cast<char>(quantize_u8(px[i]));
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw Error("I/O failure while writing PPM");
  return header.size() + raster.size();
}

inline TensorF32 load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(with_context("cannot open for reading", path.string()));
  try {
    return read_ppm(in);
  } catch (const FormatError& e) {
    throw FormatError(with_context(e.what(), path.string()));
  }
}

inline size_t save_ppm(const TensorF32& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(with_context("cannot open for writing", path.string()));
  size_t n = write_ppm(image, out);
  out.flush();
  if (!out) throw Error(with_context("I/O failure", path.string()));
  return n;
}

}  // namespace poseflow
