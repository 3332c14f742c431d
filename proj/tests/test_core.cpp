// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <random>
#include <sstream>
#include <string>

#include "poseflow/core/config.hpp"
#include "poseflow/core/formats.hpp"
#include "poseflow/core/tensor.hpp"
#include "poseflow/core/topology.hpp"
#include "poseflow/core/types.hpp"
#include "test_util.hpp"

namespace poseflow {
namespace {

std::string bytes_of(const TensorF32& t) {
  std::ostringstream os;
  write_tensor(t, os);
  return os.str();
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(TensorF32({2, 2}, {1, 2, 3}), ContractError);
  EXPECT_EQ(TensorF32({2, 3}).size(), 6u);
  EXPECT_THROW(TensorF32::element_count(std::vector<uint32_t>{0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu}), ContractError);
}

TEST(Tensor, EqualityIsBitwise) {
  TensorF32 a({1}, {0.0f});
  TensorF32 b({1}, {-0.0f});
  EXPECT_FALSE(a == b);
  EXPECT_TRUE(a == TensorF32({1}, {0.0f}));
  EXPECT_FALSE(TensorF32({1, 2}) == TensorF32({2, 1}));
}

TEST(Hpt1, TwoByTwoIs29Bytes) {
  TensorF32 t({2, 2}, {0, 1, 2, 3});
  std::ostringstream os;
  EXPECT_EQ(write_tensor(t, os), 29u);
  const std::string b = os.str();
  ASSERT_EQ(b.size(), 29u);
  EXPECT_EQ(b.substr(0, 4), "HPT1");
  EXPECT_EQ(b[4], 2);
  EXPECT_EQ(b.substr(5, 8), std::string("\x02\x00\x00\x00\x02\x00\x00\x00", 8));
  // 1.0f == 0x3F800000, little-endian.
  EXPECT_EQ(b.substr(17, 4), std::string("\x00\x00\x80\x3F", 4));
}

TEST(Hpt1, ScalarPayload) {
  TensorF32 t({1}, {0.0f});
  EXPECT_EQ(bytes_of(t).size(), 4u + 1u + 4u + 4u);
}

TEST(Hpt1, ReadsBackExample) {
  std::istringstream is(bytes_of(TensorF32({2, 2}, {0, 1, 2, 3})));
  TensorF32 t = read_tensor(is);
  EXPECT_EQ(t.dims(), (std::vector<uint32_t>{2, 2}));
  EXPECT_EQ(t.values(), (std::vector<float>{0, 1, 2, 3}));
}

TEST(Hpt1, RandomRoundTripIsBitExact) {
  std::mt19937 rng(3);
  TensorF32 t = testing_util::random_tensor({3, 4, 5}, rng);
  t.values()[7] = -0.0f;
  t.values()[8] = std::numeric_limits<float>::denorm_min();
  std::istringstream is(bytes_of(t));
  EXPECT_TRUE(read_tensor(is) == t);
}

TEST(Hpt1, RejectsBadMagic) {
  std::string b = bytes_of(TensorF32({2, 2}, {0, 1, 2, 3}));
  b.replace(0, 4, "XXXX");
  std::istringstream is(b);
  EXPECT_THROW(read_tensor(is), FormatError);
}

TEST(Hpt1, RejectsTruncatedPayload) {
  std::string b = bytes_of(TensorF32({2, 2}, {0, 1, 2, 3}));
  std::istringstream is(b.substr(0, b.size() - 4));
  EXPECT_THROW(read_tensor(is), FormatError);
  std::istringstream header_only(b.substr(0, 7));
  EXPECT_THROW(read_tensor(header_only), FormatError);
}

TEST(Hpt1, RejectsDimOverflow) {
  std::string b = "HPT1";
  b.push_back(3);
  for (int i = 0; i < 3; ++i) b += std::string("\xFF\xFF\xFF\xFF", 4);
  std::istringstream is(b);
  EXPECT_THROW(read_tensor(is), FormatError);
}

TEST(Hpt1, FileErrorsCarryPath) {
  auto dir = testing_util::temp_dir("hpt1");
  try {
    load_tensor(dir / "missing.hpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing.hpt"), std::string::npos);
  }
}

TEST(Ppm, SingleRedPixel) {
  std::istringstream is(std::string("P6\n1 1\n255\n\xFF\x00\x00", 14));
  TensorF32 t = read_ppm(is);
  EXPECT_EQ(t.dims(), (std::vector<uint32_t>{1, 1, 3}));
  EXPECT_EQ(t.values(), (std::vector<float>{1.0f, 0.0f, 0.0f}));
}

TEST(Ppm, BlackImageIsZero) {
  std::istringstream is(std::string("P6\n2 2\n255\n") + std::string(12, '\0'));
  TensorF32 t = read_ppm(is);
  EXPECT_TRUE(t == TensorF32({2, 2, 3}));
}

TEST(Ppm, HeaderCommentsAreSkipped) {
  std::istringstream is(std::string("P6 # made by hand\n1 # width\n1\n255\n\x01\x02\x03"));
  TensorF32 t = read_ppm(is);
  EXPECT_FLOAT_EQ(t.at(0, 0, 2), 3.0f / 255.0f);
}

TEST(Ppm, RejectsMalformed) {
  std::istringstream p3("P3\n1 1\n255\n0 0 0\n");
  EXPECT_THROW(read_ppm(p3), FormatError);
  std::istringstream deep("P6\n1 1\n65535\n\0\0\0\0\0\0");
  EXPECT_THROW(read_ppm(deep), FormatError);
  std::istringstream short_raster(std::string("P6\n2 2\n255\n") + std::string(11, '\0'));
  EXPECT_THROW(read_ppm(short_raster), FormatError);
}

TEST(Ppm, WriteWhitePixel) {
  std::ostringstream os;
  EXPECT_EQ(write_ppm(TensorF32({1, 1, 3}, {1, 1, 1}), os), 14u);
  EXPECT_EQ(os.str(), std::string("P6\n1 1\n255\n\xFF\xFF\xFF"));
}

TEST(Ppm, WriteBlackPixel) {
  std::ostringstream os;
  write_ppm(TensorF32({1, 1, 3}, {0, 0, 0}), os);
  EXPECT_EQ(os.str().substr(11), std::string(3, '\0'));
}

TEST(Ppm, RoundsHalfAwayFromZero) {
  EXPECT_EQ(quantize_u8(0.5f), 128);
  EXPECT_EQ(quantize_u8(-0.2f), 0);
  EXPECT_EQ(quantize_u8(1.5f), 255);
  EXPECT_EQ(quantize_u8(1.0f / 255.0f), 1);
}

TEST(Ppm, WriteRejectsWrongRank) {
  std::ostringstream os;
  EXPECT_THROW(write_ppm(TensorF32({2, 2}), os), ContractError);
  EXPECT_THROW(write_ppm(TensorF32({2, 2, 4}), os), ContractError);
}

TEST(Ppm, RandomImageRoundTripsWithinOneLevel) {
  std::mt19937 rng(11);
  TensorF32 img = testing_util::random_tensor({8, 8, 3}, rng, 0.0f, 1.0f);
  std::ostringstream os;
  write_ppm(img, os);
  std::istringstream is(os.str());
  TensorF32 back = read_ppm(is);
  ASSERT_EQ(back.dims(), img.dims());
  for (size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.values()[i] - img.values()[i]), 1.0f / 255.0f);
}

TEST(Coordinates, CellCenterConvention) {
  EXPECT_FLOAT_EQ(cell_to_pixel(0, 8), 3.5f);
  EXPECT_FLOAT_EQ(cell_to_pixel(5, 8), 43.5f);
  EXPECT_FLOAT_EQ(pixel_to_cell(43.5f, 8), 5.0f);
  EXPECT_FLOAT_EQ(cell_to_pixel(0, 1), 0.0f);
}

// ---------------------------------------------------------------------------
// Topology

TEST(Topology, BundledCoco18) {
  SkeletonTopology topo = load_topology(default_topology_path());
  EXPECT_EQ(topo.keypoint_count(), 18u);
  EXPECT_EQ(topo.limb_count(), 19u);
  EXPECT_TRUE(topo.connected());
  EXPECT_TRUE(topo.warnings().empty());
  EXPECT_EQ(topo.paf_channels()[3], (PafChannels{6, 7}));
  EXPECT_EQ(topo.index_of("neck"), 1u);
}

std::string expect_topology_error(const std::string& toml) {
  try {
    parse_topology(toml);
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << toml;
  return {};
}

TEST(Topology, RejectsMalformed) {
  EXPECT_NE(expect_topology_error("keypoints = ['a','b']\nlimbs = [[0,0]]").find("to itself"), std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','b']\nlimbs = [[0,2]]").find("references keypoint 2"),
            std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','b']\nlimbs = [[0,1]]\npaf_channels = [[0,2]]")
                .find("PAF channel 2"),
            std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','b','c']\nlimbs = [[0,1],[1,2]]\npaf_channels = [[0,1],[1,2]]")
                .find("more than one"),
            std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','b']\nlimbs = [[0,1]]\npaf_channels = []").find("entries"),
            std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = []\nlimbs = []").find("no keypoints"), std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','a']\nlimbs = []").find("duplicate"), std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','b']\nlimbs = [[0]]").find("two-element"), std::string::npos);
  EXPECT_NE(expect_topology_error("keypoints = ['a','b']\nlimbs = [[0,-1]]").find("non-negative"),
            std::string::npos);
  EXPECT_NE(expect_topology_error("limbs = [[0,1]]").find("keypoints"), std::string::npos);
  EXPECT_FALSE(expect_topology_error("keypoints = [").empty());
}

TEST(Topology, DisconnectedGraphWarns) {
  auto topo = parse_topology("keypoints = ['a','b','c','d']\nlimbs = [[0,1],[2,3]]");
  EXPECT_FALSE(topo.connected());
  ASSERT_EQ(topo.warnings().size(), 1u);
}

TEST(Topology, MissingFileIsConfigError) { EXPECT_THROW(load_topology("/nonexistent/topo.toml"), ConfigError); }

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsValidate) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.parser.nms_window, 3u);
  EXPECT_FLOAT_EQ(cfg.parser.conf_threshold, 0.10f);
  EXPECT_EQ(cfg.scheduler.batch_max, 8u);
  EXPECT_EQ(cfg.scheduler.linger_us, 0u);
}

TEST(Config, PrintedTomlRoundTrips) {
  PipelineConfig cfg;
  cfg.parser.conf_threshold = 0.123f;
  cfg.synth.sigma_conf = 1.7f;
  cfg.scheduler.enabled = false;
  cfg.backend = parse_backend_arg("file:/tmp/dumps");
  cfg.out_dir = "some \"quoted\" dir";
  cfg.frames = 42;
  EXPECT_EQ(parse_config(to_toml(cfg)), cfg);
  EXPECT_EQ(parse_config(to_toml(PipelineConfig{})), PipelineConfig{});
}

TEST(Config, PartialFileOverlaysDefaults) {
  auto cfg = parse_config("[scheduler]\nbatch_max = 4\n[parser]\nmin_parts = 3\n");
  EXPECT_EQ(cfg.scheduler.batch_max, 4u);
  EXPECT_EQ(cfg.parser.min_parts, 3u);
  EXPECT_EQ(cfg.input_w, 640u);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(parse_config("[scheduler]\nbatch_mx = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[nope]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[scheduler]\nbatch_max = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("[scheduler]\nenabled = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[backend]\nkind = \"gpu\"\n"), ConfigError);
}

TEST(Config, ValidationCatchesBadValues) {
  auto invalid = [](auto mutate) {
    PipelineConfig cfg;
    mutate(cfg);
    EXPECT_THROW(cfg.validate(), ConfigError);
  };
  invalid([](PipelineConfig& c) { c.channel_capacity = 0; });
  invalid([](PipelineConfig& c) { c.scheduler.batch_max = 0; });
  invalid([](PipelineConfig& c) { c.scheduler.batch_max = 16; });  // backend max 8
  invalid([](PipelineConfig& c) { c.input_w = 644; });
  invalid([](PipelineConfig& c) { c.parser.nms_window = 4; });
  invalid([](PipelineConfig& c) { c.parser.nms_window = 1; });
  invalid([](PipelineConfig& c) { c.parser.n_samples = 1; });
  invalid([](PipelineConfig& c) { c.parser.good_fraction_min = 1.5f; });
  invalid([](PipelineConfig& c) { c.synth.sigma_conf = 0; });
  invalid([](PipelineConfig& c) { c.synth.paf_halfwidth = -1; });
  PipelineConfig off;
  off.scheduler.enabled = false;
  off.scheduler.batch_max = 16;  // ignored while disabled
  EXPECT_NO_THROW(off.validate());
}

TEST(Config, BackendArgument) {
  EXPECT_EQ(parse_backend_arg("synth").path, "");
  EXPECT_EQ(parse_backend_arg("synth:scenes.toml").path, "scenes.toml");
  EXPECT_EQ(parse_backend_arg("file:dumps").kind, BackendKind::tensor_file);
  EXPECT_THROW(parse_backend_arg("file"), ConfigError);
  EXPECT_THROW(parse_backend_arg("tensorrt:model.plan"), ConfigError);
  EXPECT_EQ(backend_arg(parse_backend_arg("synth:a.toml")), "synth:a.toml");
}

}  // namespace
}  // namespace poseflow
