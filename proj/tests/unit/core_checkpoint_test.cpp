#include <filesystem>
#include <random>

#include "gtest/gtest.h"
#include "rarelab/core/checkpoint.hpp"

namespace rarelab::core {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rarelab_ckpt_" + name);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> dist;
  Parameter<float> a("a", Tensor<float>({3, 4}));
  Parameter<float> b("b", Tensor<float>::vector({1.0f, -0.0f, 3.25f}), true);
  for (auto& v : a.mutable_value().values()) v = dist(rng);

  Checkpoint ckpt;
  ckpt.meta["stage"] = 2;
  append_parameters<float>(ckpt, {&a, &b});
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, ckpt);
  const auto loaded = load_checkpoint(path);

  EXPECT_EQ(loaded.meta["stage"], 2);
  ASSERT_EQ(loaded.tensors.size(), 2u);
  EXPECT_TRUE(loaded.at("b").frozen);
  EXPECT_EQ(loaded.at("a").shape, (Shape{3, 4}));

  Parameter<float> a2("a", Tensor<float>({3, 4}));
  Parameter<float> b2("b", Tensor<float>({3}));
  load_parameters<float>(loaded, {&a2, &b2}, true);
  EXPECT_EQ(a2.value().values(), a.value().values());
  EXPECT_EQ(b2.value().values(), b.value().values());
  EXPECT_TRUE(b2.frozen());
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
}

TEST(Checkpoint, PayloadIsLittleEndianFloat32InHeaderOrder) {
  Checkpoint ckpt;
  ckpt.tensors.push_back({"x", {2}, false, {1.0f, -2.0f}});
  ckpt.tensors.push_back({"y", {1}, true, {0.5f}});
  const std::string bytes = serialize_checkpoint(ckpt);
  ASSERT_EQ(bytes.substr(0, 8), "RLCKPT01");
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) {
    header_len |= std::uint64_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  }
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  EXPECT_EQ(header["tensors"][1]["offset"], 8);
  const std::string payload = bytes.substr(16 + header_len);
  ASSERT_EQ(payload.size(), 12u);
  // 1.0f = 0x3F800000
  EXPECT_EQ(static_cast<unsigned char>(payload[3]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(payload[2]), 0x80);
  // 0.5f = 0x3F000000, third float
  EXPECT_EQ(static_cast<unsigned char>(payload[11]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(payload[10]), 0x00);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  Checkpoint ckpt;
  ckpt.tensors.push_back({"w", {2, 2}, false, {1, 2, 3, 4}});
  Parameter<float> w("w", Tensor<float>({4}));
  EXPECT_THROW(load_parameters<float>(ckpt, {&w}), DimensionError);
  Parameter<float> missing("missing", Tensor<float>({1}));
  EXPECT_THROW(load_parameters<float>(ckpt, {&missing}), ConfigError);
}

TEST(Checkpoint, GarbageIsIoError) {
  EXPECT_THROW(parse_checkpoint("not a checkpoint at all"), IoError);
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist")), IoError);
}

}  // namespace
}  // namespace rarelab::core
