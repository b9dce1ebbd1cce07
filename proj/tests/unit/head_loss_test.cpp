#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tqf/head/head_loss.hpp"
#include "tqf/head/optimizer.hpp"

namespace tqf::head {
namespace {

Tensor<double> random_matrix(std::size_t m, std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(m * n);
  for (auto& x : v) x = dist(rng);
  return Tensor<double>({m, n}, v);
}

std::vector<double> random_binary(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = (rng() % 3 == 0) ? 1.0 : 0.0;
  return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Pixel-loop reference for Dice + clamped BCE of one logit row.
double dice_bce_oracle(const double* logits, const std::vector<double>& g, std::size_t offset, std::size_t n) {
  double inter = 0, ps = 0, gs = 0, bce = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double p = sigmoid(logits[k]);
    inter += p * g[offset + k];
    ps += p;
    gs += g[offset + k];
    const double z = std::clamp(logits[k], -15.0, 15.0);
    const double q = sigmoid(z);
    bce -= g[offset + k] * std::log(q) + (1 - g[offset + k]) * std::log(1 - q);
  }
  return 1.0 - (2 * inter + 1e-6) / (ps + gs + 1e-6) + bce / static_cast<double>(n);
}

TEST(Predict, RankingByReferredConfidence) {
  Tensor<double> logits({2, 2}, {2, 0, 0, 2});
  EXPECT_EQ(rank_tokens(logits), (std::vector<std::size_t>{0, 1}));
  Tensor<double> tied({3, 2}, {0, 0, 1, 0, 0, 0});
  EXPECT_EQ(rank_tokens(tied), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Predict, ZeroCoefficientsGiveHalfMasks) {
  ParamStore<double> store(2);
  PredictionHead<double> head(store, "head", 4, 3);
  nn::fill_params(store, "head.coeff", 0.0);
  auto pred = head(random_matrix(5, 4, 1), random_matrix(2 * 6, 3, 2), 2, 6);
  const auto masks = pred.video_masks();
  for (double v : masks.values()) EXPECT_EQ(v, 0.5);
}

TEST(Predict, MaskIsSigmoidOfCoefficientDot) {
  ParamStore<double> store(3);
  PredictionHead<double> head(store, "head", 4, 3);
  auto v = random_matrix(5, 4, 3);
  auto pix = random_matrix(2 * 6, 3, 4);
  auto pred = head(v, pix, 2, 6);
  const auto masks = pred.video_masks();
  const auto& w = store.get("head.coeff.weight").tensor;
  const auto& b = store.get("head.coeff.bias").tensor;
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const std::size_t e = rng() % 5, p = rng() % 12;
    double dot = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      double coeff = b[c];
      for (std::size_t j = 0; j < 4; ++j) coeff += v.at({e, j}) * w.at({j, c});
      dot += coeff * pix.at({p, c});
    }
    EXPECT_NEAR(masks.at({e, p}), sigmoid(dot), 1e-12);
  }
  auto top = pred.top_mask();
  ASSERT_EQ(top.size(), 12u);
  for (std::size_t p = 0; p < 12; ++p) EXPECT_EQ(top[p], pred.mask_logits.at({pred.ranking[0], p}) > 0 ? 1 : 0);
}

TEST(Consistency, ConstantTokensGiveZero) {
  auto row = random_matrix(1, 5, 6);
  std::vector<double> rows;
  for (int i = 0; i < 4; ++i) rows.insert(rows.end(), row.values().begin(), row.values().end());
  EXPECT_NEAR(consistency_loss(Tensor<double>({4, 5}, rows), 1, 4).item(), 0.0, 1e-15);
}

TEST(Consistency, AlternatingSignGivesTwo) {
  auto row = random_matrix(1, 5, 7);
  std::vector<double> rows;
  for (int t = 0; t < 6; ++t) {
    for (double v : row.values()) rows.push_back(t % 2 ? -v : v);
  }
  EXPECT_NEAR(consistency_loss(Tensor<double>({6, 5}, rows), 1, 6).item(), 2.0, 1e-12);
}

TEST(Consistency, MatchesLoopOracle) {
  const std::size_t n = 3, frames = 5, c = 4;
  auto o = random_matrix(n * frames, c, 8);
  for (bool literal : {false, true}) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t + 1 < frames; ++t) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < c; ++k) {
          const double a = o.at({i * frames + t, k}), b = o.at({i * frames + t + 1, k});
          dot += a * b;
          na += a * a;
          nb += b * b;
        }
        acc += 1 - dot / std::sqrt(na * nb);
      }
    }
    const double expected = acc / (n * (literal ? frames : frames - 1));
    EXPECT_NEAR(consistency_loss(o, n, frames, literal).item(), expected, 1e-12);
  }
  EXPECT_EQ(consistency_loss(random_matrix(3, 4, 9), 3, 1).item(), 0.0);
}

TEST(Consistency, BoundedByTwo) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double l = consistency_loss(random_matrix(4 * 3, 6, 100 + s), 4, 3).item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
  }
}

TEST(FrameLoss, PerfectPredictionIsNearZero) {
  const std::size_t slots = 2, frames = 2, area = 8;
  auto gt = random_binary(frames * area, 10);
  std::vector<double> logits(slots * frames * area, -1000.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t p = 0; p < area; ++p) logits[(t * slots + 1) * area + p] = gt[t * area + p] > 0 ? 1000 : -1000;
  }
  Tensor<double> m({slots * frames, area}, logits);
  auto assign = match_slots(m, slots, frames, area, std::vector<std::vector<double>>{gt});
  ASSERT_EQ(assign, (std::vector<std::size_t>{1}));
  EXPECT_LT(frame_loss(m, slots, frames, area, {gt}, assign).item(), 1e-6);
}

TEST(FrameLoss, ComplementGivesUnitDice) {
  const std::size_t area = 10;
  auto gt = random_binary(area, 11);
  std::vector<double> logits(area);
  for (std::size_t p = 0; p < area; ++p) logits[p] = gt[p] > 0 ? -1000 : 1000;
  Tensor<double> m({1, area}, logits);
  EXPECT_NEAR(ops::dice_loss(m, gt).item(), 1.0, 1e-6);
}

TEST(FrameLoss, MatchesPixelLoop) {
  const std::size_t slots = 4, frames = 3, area = 12;
  auto m = random_matrix(slots * frames, area, 12, 2.0);
  std::vector<std::vector<double>> gts{random_binary(frames * area, 13), random_binary(frames * area, 14)};
  auto assign = match_slots(m, slots, frames, area, gts);
  ASSERT_EQ(assign.size(), 2u);
  EXPECT_NE(assign[0], assign[1]);
  double expected = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> row;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t p = 0; p < area; ++p) row.push_back(m.at({t * slots + assign[k], p}));
    }
    expected += dice_bce_oracle(row.data(), gts[k], 0, frames * area);
  }
  EXPECT_NEAR(frame_loss(m, slots, frames, area, gts, assign).item(), expected / 2, 1e-9);
}

TEST(FrameLoss, MatchingMinimizesDice) {
  // Slot 2 is a near-copy of object 0, slot 0 of object 1.
  const std::size_t slots = 3, frames = 1, area = 6;
  std::vector<double> g0{1, 1, 0, 0, 0, 0}, g1{0, 0, 0, 1, 1, 1};
  std::vector<double> logits(slots * area, -5);
  for (std::size_t p = 0; p < area; ++p) {
    logits[2 * area + p] = g0[p] > 0 ? 5 : -5;
    logits[0 * area + p] = g1[p] > 0 ? 5 : -5;
  }
  auto assign = match_slots(Tensor<double>({slots, area}, logits), slots, frames, area,
                            std::vector<std::vector<double>>{g0, g1});
  EXPECT_EQ(assign, (std::vector<std::size_t>{2, 0}));
}

Prediction<double> make_prediction(const Tensor<double>& logits, const Tensor<double>& cls) {
  Prediction<double> p;
  p.frames = 1;
  p.area = logits.dim(1);
  p.mask_logits = logits;
  p.class_logits = cls;
  p.ranking = rank_tokens(cls);
  return p;
}

TEST(VideoLoss, PerfectTopTokenApproachesZero) {
  auto gt = random_binary(16, 15);
  std::vector<double> logits(3 * 16, -1000);
  for (std::size_t p = 0; p < 16; ++p) logits[16 + p] = gt[p] > 0 ? 1000 : -1000;
  Tensor<double> cls({3, 2}, {-30, 30, 30, -30, -30, 30});
  std::size_t matched = 99;
  auto l = video_loss(make_prediction(Tensor<double>({3, 16}, logits), cls), gt, &matched);
  EXPECT_EQ(matched, 1u);
  EXPECT_LT(l.item(), 1e-6);
}

TEST(VideoLoss, UniformClassLogitsCostLnTwo) {
  auto gt = random_binary(16, 16);
  std::vector<double> logits(2 * 16, -1000);
  for (std::size_t p = 0; p < 16; ++p) logits[p] = gt[p] > 0 ? 1000 : -1000;
  auto l = video_loss(make_prediction(Tensor<double>({2, 16}, logits), Tensor<double>({2, 2})), gt);
  EXPECT_NEAR(l.item(), std::log(2.0), 1e-6);
}

TEST(VideoLoss, MatchesLoopOracle) {
  auto m = random_matrix(4, 20, 17, 2.0);
  auto cls = random_matrix(4, 2, 18);
  auto gt = random_binary(20, 19);
  std::size_t matched = 0;
  auto l = video_loss(make_prediction(m, cls), gt, &matched);

  std::size_t best = 0;
  double best_dice = 1e300;
  for (std::size_t e = 0; e < 4; ++e) {
    double inter = 0, ps = 0, gs = 0;
    for (std::size_t p = 0; p < 20; ++p) {
      const double s = sigmoid(m.at({e, p}));
      inter += s * gt[p];
      ps += s;
      gs += gt[p];
    }
    const double d = 1 - (2 * inter + 1e-6) / (ps + gs + 1e-6);
    if (d < best_dice) {
      best_dice = d;
      best = e;
    }
  }
  EXPECT_EQ(matched, best);
  double ce = 0;
  for (std::size_t e = 0; e < 4; ++e) {
    const double a = cls.at({e, 0}), b = cls.at({e, 1});
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    ce += lse - (e == best ? a : b);
  }
  const double expected = dice_bce_oracle(&m.values()[best * 20], gt, 0, 20) + ce / 4;
  EXPECT_NEAR(l.item(), expected, 1e-9);
}

TEST(Combine, WeightedSum) {
  auto f = Tensor<double>::scalar(0.7), v = Tensor<double>::scalar(1.3), c = Tensor<double>::scalar(0.4);
  auto b = combine(f, v, c, LossWeights{1.0, 1.0, 0.5});
  EXPECT_EQ(b.l_total.item(), 1.0 * 1.3 + 1.0 * 0.7 + 0.5 * 0.4);
  auto z = combine(f, v, c, LossWeights{2.0, 3.0, 0.0});
  EXPECT_EQ(z.l_total.item(), 2.0 * 1.3 + 3.0 * 0.7);
}

TEST(AdamW, ZeroLearningRateLeavesParameters) {
  ParamStore<double> store(4);
  auto w = store.create("w", {3, 3}, {});
  const auto before = w.values();
  AdamW<double> opt(store, AdamWOptions{0.0, 0.9, 0.999, 1e-8, 1e-4});
  auto loss = ops::sum(ops::mul(w, w));
  backward(loss);
  opt.step();
  EXPECT_EQ(w.values(), before);
}

TEST(AdamW, FirstStepMovesBySignTimesLr) {
  ParamStore<double> store(5);
  auto w = store.create("w", {4}, {InitSpec::Kind::kConstant, 2.0, 1});
  AdamW<double> opt(store, AdamWOptions{0.1, 0.9, 0.999, 1e-12, 0.0});
  backward(ops::sum(ops::mul(w, w)));
  opt.step();
  // Bias-corrected first step is lr * g / |g|.
  for (double v : w.values()) EXPECT_NEAR(v, 1.9, 1e-9);
  EXPECT_EQ(opt.steps(), 1u);
}

}  // namespace
}  // namespace tqf::head
