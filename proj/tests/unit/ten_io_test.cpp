#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "tqf/core/ten_io.hpp"

namespace tqf::io {
namespace {

TEST(TenFormat, LayoutIsMagicLengthJsonPayload) {
  Tensor<float> t({2, 1}, {1.0f, -2.5f});
  const std::string bytes = encode_ten(t);
  ASSERT_EQ(bytes.substr(0, 8), "TQFTEN01");
  const std::uint32_t len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8) |
                            (static_cast<unsigned char>(bytes[10]) << 16) |
                            (static_cast<unsigned char>(bytes[11]) << 24);
  EXPECT_EQ(bytes.substr(12, len), R"({"dtype":"f32","shape":[2,1]})");
  ASSERT_EQ(bytes.size(), 12 + len + 8);
  float second;
  std::memcpy(&second, bytes.data() + 12 + len + 4, 4);  // host is little-endian here
  EXPECT_EQ(second, -2.5f);
}

TEST(TenFormat, RoundTripPreservesBitsAndShape) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist;
  for (const Shape& shape : {Shape{}, Shape{5}, Shape{2, 3, 4}, Shape{0, 3}}) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    Tensor<double> t(shape, v);
    auto back = decode_ten<double>(encode_ten(t));
    EXPECT_EQ(back.shape(), shape);
    EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), v.size() * sizeof(double)), 0);
  }
}

TEST(TenFormat, FileRoundTripAcrossPrecision) {
  const auto dir = std::filesystem::temp_directory_path() / "tqf_ten_io_test";
  Tensor<float> t({3}, {0.5f, 1.25f, -3.0f});
  write_ten(dir / "x.ten", t);
  auto back = read_ten<double>(dir / "x.ten");
  EXPECT_EQ(back[2], -3.0);
  std::filesystem::remove_all(dir);
}

TEST(TenFormat, RejectsCorruptInput) {
  EXPECT_THROW(decode_ten<float>("TQFTEN02...."), ValidationError);
  std::string bytes = encode_ten(Tensor<float>({2}, {1, 2}));
  bytes.pop_back();
  EXPECT_THROW(decode_ten<float>(bytes), ValidationError);
}

}  // namespace
}  // namespace tqf::io
