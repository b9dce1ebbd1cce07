#include <gtest/gtest.h>

#include <random>

#include "tqf/bench/metrics.hpp"
#include "tqf/core/tensor.hpp"

namespace tqf::bench {
namespace {

BinaryClip random_clip(std::size_t n, std::uint64_t seed, double p = 0.3) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(p);
  BinaryClip c(n);
  for (auto& v : c) v = on(rng);
  return c;
}

TEST(EvalJf, PerfectPrediction) {
  auto gt = random_clip(3 * 36, 1);
  auto r = eval_jf(gt, gt, 3, 6, 6);
  EXPECT_EQ(r.j, 1.0);
  EXPECT_EQ(r.f, 1.0);
  EXPECT_EQ(r.jf, 1.0);
}

TEST(EvalJf, DisjointMasks) {
  BinaryClip a(16, 0), b(16, 0);
  a[0] = a[1] = 1;
  b[14] = b[15] = 1;
  EXPECT_EQ(eval_jf(a, b, 1, 4, 4).j, 0.0);
}

TEST(EvalJf, ShiftedSquares) {
  BinaryClip a(25, 0), b(25, 0);
  for (std::size_t y : {1u, 2u}) {
    for (std::size_t x : {1u, 2u}) a[y * 5 + x] = 1;
    for (std::size_t x : {2u, 3u}) b[y * 5 + x] = 1;
  }
  EXPECT_DOUBLE_EQ(eval_jf(a, b, 1, 5, 5).j, 1.0 / 3.0);
}

TEST(EvalJf, EmptyFramesCountAsPerfect) {
  BinaryClip a(2 * 9, 0), b(2 * 9, 0);
  a[9] = b[9] = 1;
  auto r = eval_jf(a, b, 2, 3, 3);
  EXPECT_EQ(r.j, 1.0);
  EXPECT_EQ(r.f, 1.0);
}

TEST(Boundary, ErosionOfSolidSquare) {
  BinaryClip m(36, 0);
  for (std::size_t y = 1; y < 5; ++y)
    for (std::size_t x = 1; x < 5; ++x) m[y * 6 + x] = 1;
  auto b = mask_boundary(m.data(), 6, 6);
  std::size_t count = 0;
  for (auto v : b) count += v;
  EXPECT_EQ(count, 12u);  // 4x4 ring
  EXPECT_EQ(b[2 * 6 + 2], 0);
}

TEST(EvalDataset, PerfectScoresOne) {
  std::vector<BinaryClip> gts{random_clip(2 * 16, 2), random_clip(2 * 16, 3)};
  auto r = eval_dataset(gts, gts, 2, 4, 4);
  EXPECT_EQ(r.j, 1.0);
  EXPECT_EQ(r.f, 1.0);
  EXPECT_EQ(r.jf, 1.0);
  EXPECT_EQ(r.oiou, 1.0);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.map, 1.0);
  EXPECT_EQ(r.samples, 2u);
}

TEST(EvalDataset, MapCountsThresholds) {
  // 3 predicted pixels inside a 5-pixel target: IoU = 0.6 clears 0.50, 0.55 and 0.60.
  BinaryClip gt(10, 0), pred(10, 0);
  for (std::size_t i : {0u, 1u, 2u, 3u, 4u}) gt[i] = 1;
  for (std::size_t i : {0u, 1u, 2u}) pred[i] = 1;
  ASSERT_DOUBLE_EQ(clip_iou(pred, gt), 0.6);
  auto r = eval_dataset({pred}, {gt}, 1, 2, 5);
  EXPECT_DOUBLE_EQ(r.map, 0.3);
}

TEST(EvalDataset, PooledAndMeanIouMatchLoop) {
  std::vector<BinaryClip> preds, gts;
  for (std::uint64_t s = 0; s < 20; ++s) {
    preds.push_back(random_clip(3 * 25, 100 + s, 0.4));
    gts.push_back(random_clip(3 * 25, 200 + s, 0.3));
  }
  double inter = 0, uni = 0, miou = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    double i = 0, u = 0;
    for (std::size_t p = 0; p < preds[k].size(); ++p) {
      i += preds[k][p] && gts[k][p];
      u += preds[k][p] || gts[k][p];
    }
    inter += i;
    uni += u;
    miou += u > 0 ? i / u : 1.0;
  }
  auto r = eval_dataset(preds, gts, 3, 5, 5);
  EXPECT_NEAR(r.oiou, inter / uni, 1e-9);
  EXPECT_NEAR(r.miou, miou / preds.size(), 1e-9);
}

TEST(EvalDataset, RejectsMismatch) {
  EXPECT_THROW(eval_dataset({BinaryClip(4)}, {}, 1, 2, 2), ValidationError);
  EXPECT_THROW(eval_dataset({BinaryClip(4)}, {BinaryClip(5)}, 1, 2, 2), ValidationError);
}

}  // namespace
}  // namespace tqf::bench
