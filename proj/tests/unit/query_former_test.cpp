#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "tqf/query/query_former.hpp"

namespace tqf::query {
namespace {

Tensor<double> random_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(m * n);
  for (auto& x : v) x = dist(rng);
  return Tensor<double>({m, n}, v);
}

void zero_params(ParamStore<double>& store, const std::string& prefix) {
  for (auto& p : store.params()) {
    if (p.name.rfind(prefix, 0) == 0) {
      for (auto& x : p.tensor.mutable_data()) x = 0;
    }
  }
}

FeaturePyramid<double> make_pyramid(std::size_t frames, std::size_t h, std::size_t w, std::size_t c,
                                    std::uint64_t seed, bool zero = false) {
  FeaturePyramid<double> p;
  p.frames = frames;
  p.channels = c;
  for (std::size_t l = 0; l < kPyramidLevels; ++l) {
    p.dims[l] = {h, w};
    p.levels[l] = zero ? Tensor<double>({frames * h * w, c}) : random_matrix(frames * h * w, c, seed + l);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return p;
}

// ---------------------------------------------------------------- seeds

TEST(SeedPoints, ConstantFieldPicksOriginFirst) {
  const LevelDims dims{6, 6};
  std::vector<double> row{0.5, -1, 2};
  std::vector<double> field;
  for (std::size_t i = 0; i < dims.area(); ++i) field.insert(field.end(), row.begin(), row.end());
  auto picks = select_seed_points(Tensor<double>({36, 3}, field), dims, Tensor<double>({1, 3}, row), 3, 2);
  ASSERT_EQ(picks.size(), 3u);
  EXPECT_EQ(picks[0], (PixelPoint{0, 0}));
}

TEST(SeedPoints, AlignedPixelComesFirst) {
  const LevelDims dims{5, 5};
  Tensor<double> feats({25, 2});
  auto d = feats.mutable_data();
  for (std::size_t p = 0; p < 25; ++p) d[p * 2 + 1] = 1;  // orthogonal to the text row
  d[13 * 2] = 3;
  d[13 * 2 + 1] = 0;
  auto picks = select_seed_points(feats, dims, Tensor<double>({1, 2}, {1, 0}), 2, 2);
  EXPECT_EQ(picks[0], (PixelPoint{3, 2}));
}

TEST(SeedPoints, MatchesGreedyReplayAndKeepsDistance) {
  const LevelDims dims{16, 16};
  auto feats = random_matrix(256, 5, 11);
  auto text = random_matrix(2, 5, 12);
  const std::size_t radius = 2;
  auto picks = select_seed_points(feats, dims, text, 4, radius);
  ASSERT_EQ(picks.size(), 4u);

  // Replay: best remaining score among pixels at distance >= radius from all picks.
  auto cosine = [](const double* a, const double* b, std::size_t n) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
  };
  std::vector<double> score(256);
  for (std::size_t p = 0; p < 256; ++p) {
    score[p] = std::max(cosine(&feats.values()[p * 5], &text.values()[0], 5),
                        cosine(&feats.values()[p * 5], &text.values()[5], 5));
  }
  std::vector<PixelPoint> replay;
  for (int k = 0; k < 4; ++k) {
    double best = -3;
    PixelPoint arg{};
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        bool ok = true;
        for (const auto& q : replay) {
          const long dx = std::labs(long(x) - long(q.x)), dy = std::labs(long(y) - long(q.y));
          if (std::max(dx, dy) < long(radius)) ok = false;
        }
        if (ok && score[y * 16 + x] > best) {
          best = score[y * 16 + x];
          arg = {x, y};
        }
      }
    }
    replay.push_back(arg);
  }
  EXPECT_EQ(picks, replay);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      const long dx = std::labs(long(picks[a].x) - long(picks[b].x));
      const long dy = std::labs(long(picks[a].y) - long(picks[b].y));
      EXPECT_GE(std::max(dx, dy), 2);
    }
  }
}

TEST(SeedPoints, RadiusAndFallback) {
  EXPECT_EQ(suppression_radius(64), 8u);
  EXPECT_EQ(suppression_radius(8), 2u);
  // 2x2 grid with radius 5: only one unsuppressed pick, the rest come from the fallback.
  auto picks = select_seed_points(random_matrix(4, 3, 1), {2, 2}, random_matrix(1, 3, 2), 4, 5);
  EXPECT_EQ(picks.size(), 4u);
  EXPECT_THROW(select_seed_points(random_matrix(4, 3, 1), {2, 2}, random_matrix(1, 3, 2), 5, 1), ValidationError);
}

// ---------------------------------------------------------------- top-k

TEST(TopK, UniformLogitsBreakTiesByIndex) {
  Tensor<double> align({2, 3});
  auto r = topk_positions(align, random_matrix(12, 3, 3), {3, 4}, 3);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TopK, DominantPositionRanksFirst) {
  Tensor<double> feats({9, 2});
  auto d = feats.mutable_data();
  d[7 * 2] = 10;
  auto r = topk_positions(Tensor<double>({1, 2}, {1, 0}), feats, {3, 3}, 2);
  EXPECT_EQ(r.indices.front(), 7u);
}

TEST(TopK, ChildrenOfPreviousSelection) {
  const LevelDims coarse{4, 4}, fine{8, 8};
  std::vector<std::size_t> prev{0, 1, 2, 3, 4, 5, 6, 7};
  auto align = random_matrix(3, 4, 21);
  auto feats = random_matrix(64, 4, 22);
  for (std::size_t k : {5u, 40u}) {
    auto r = topk_positions(align, feats, fine, k, &prev, coarse);
    EXPECT_LE(r.candidates.size(), 32u);
    EXPECT_EQ(r.indices.size(), std::min<std::size_t>(k, 32));

    // Oracle: enumerate children by hand and rank by recomputed relevance.
    std::vector<std::size_t> kids;
    for (auto idx : prev) {
      const std::size_t y = idx / 4, x = idx % 4;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) kids.push_back((2 * y + dy) * 8 + 2 * x + dx);
    }
    std::sort(kids.begin(), kids.end());
    ASSERT_EQ(kids, r.candidates);
    std::vector<double> rel(kids.size(), 0);
    for (std::size_t row = 0; row < 3; ++row) {
      std::vector<double> e(kids.size());
      double total = 0;
      for (std::size_t j = 0; j < kids.size(); ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < 4; ++c) dot += align.at({row, c}) * feats.at({kids[j], c});
        e[j] = std::exp(dot / 2.0);
        total += e[j];
      }
      for (std::size_t j = 0; j < kids.size(); ++j) rel[j] += e[j] / total;
    }
    std::vector<std::size_t> order(kids.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rel[a] > rel[b]; });
    for (std::size_t i = 0; i < r.indices.size(); ++i) EXPECT_EQ(r.indices[i], kids[order[i]]);
  }
}

TEST(TopK, ChildPositionsClipAtOddEdges) {
  auto kids = child_positions({2}, {2, 3}, {3, 5});
  EXPECT_EQ(kids, (std::vector<std::size_t>{4, 9}));
}

// ---------------------------------------------------------------- query sets

class QueryFormerTest : public ::testing::Test {
 protected:
  static constexpr std::size_t kC = 6;
  QueryFormerOptions opts() const {
    QueryFormerOptions o;
    o.channels = kC;
    o.text_width = 5;
    o.n_app = 16;
    o.n_intra = 8;
    o.n_inter = 8;
    o.topk = 3;
    return o;
  }
  ParamStore<double> store{3};
};

TEST_F(QueryFormerTest, AppearanceResidualIdentityWithZeroMlp) {
  QueryFormer<double> qf(store, "q", opts());
  zero_params(store, "q.app.mlp");
  auto pyramid = make_pyramid(2, 8, 8, kC, 0, true);
  auto q = qf.appearance(random_matrix(2, kC, 4), pyramid);
  const auto& init = store.get("q.app.init").tensor;
  ASSERT_EQ(q.shape(), (Shape{16, kC}));
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(q[i], init[i]);
}

TEST_F(QueryFormerTest, AppearanceKeysLimitedByTopK) {
  QueryFormer<double> qf(store, "q", opts());
  auto pyramid = make_pyramid(2, 16, 16, kC, 30);
  AppearanceTrace trace;
  auto q = qf.appearance(random_matrix(3, kC, 5), pyramid, &trace);
  EXPECT_EQ(q.shape(), (Shape{16, kC}));
  EXPECT_EQ(trace.attended_keys[3], pyramid.dims[3].area());
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_LE(trace.attended_keys[l], 4 * opts().topk);
    EXPECT_LT(trace.attended_keys[l], pyramid.dims[l].area());
  }
  for (std::size_t l = 1; l < 4; ++l) EXPECT_EQ(trace.selected[l].size(), opts().topk);
}

TEST_F(QueryFormerTest, IntraResidualAndShape) {
  QueryFormer<double> qf(store, "q", opts());
  auto q = qf.intra(random_matrix(2, kC, 6), random_matrix(4, 5, 7));
  EXPECT_EQ(q.shape(), (Shape{8, kC}));
  zero_params(store, "q.intra.mlp");
  auto z = qf.intra(random_matrix(2, kC, 6), random_matrix(4, 5, 7));
  const auto& init = store.get("q.intra.init").tensor;
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], init[i]);
}

TEST_F(QueryFormerTest, IntraInvariantToDuplicatedSentenceRows) {
  QueryFormer<double> qf(store, "q", opts());
  auto sentence = random_matrix(3, 5, 8);
  std::vector<double> twice = sentence.values();
  twice.insert(twice.end(), sentence.values().begin(), sentence.values().end());
  auto rel = random_matrix(2, kC, 9);
  auto a = qf.intra(rel, sentence);
  auto b = qf.intra(rel, Tensor<double>({6, 5}, twice));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TrajectorySet<double> make_traj(std::size_t tracks, std::size_t frames, std::size_t c, std::uint64_t seed) {
  TrajectorySet<double> t;
  t.tracks = tracks;
  t.frames = frames;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 15);
  for (std::size_t i = 0; i < 2 * tracks * frames; ++i) t.coords.push_back(u(rng));
  t.valid.assign(tracks * frames, 1);
  t.embeddings = random_matrix(tracks * frames, c, seed + 1);
  return t;
}

TEST_F(QueryFormerTest, InterSingleTokenIsCopied) {
  auto o = opts();
  o.n_inter = 1;
  QueryFormer<double> qf(store, "q", o);
  auto traj = make_traj(1, 1, kC, 40);
  auto q = qf.inter(traj, random_matrix(1, kC, 41), 16, 16);
  ASSERT_EQ(q.shape(), (Shape{1, kC}));
  for (std::size_t j = 0; j < kC; ++j) EXPECT_EQ(q.at({0, j}), traj.embeddings.at({0, j}));
}

TEST_F(QueryFormerTest, InterShapeAndMaskedTokensGetNoWeight) {
  QueryFormer<double> qf(store, "q", opts());
  auto traj = make_traj(4, 3, kC, 50);
  traj.valid[5] = 0;
  Tensor<double> w;
  auto q = qf.inter(traj, random_matrix(2, kC, 51), 16, 16, &w);
  EXPECT_EQ(q.shape(), (Shape{8, kC}));
  ASSERT_EQ(w.shape(), (Shape{8, 12}));
  for (std::size_t r = 0; r < 8; ++r) {
    EXPECT_LT(w.at({r, 5}), 1e-6);
    double total = 0;
    for (std::size_t j = 0; j < 12; ++j) total += w.at({r, j});
    EXPECT_NEAR(total, 1.0, 1e-12);
  }

  // Oracle: the unmasked weights renormalized equal a softmax with a -1e9 logit.
  Tensor<double> w_all;
  traj.valid[5] = 1;
  qf.inter(traj, random_matrix(2, kC, 51), 16, 16, &w_all);
  for (std::size_t r = 0; r < 8; ++r) {
    const double keep = 1.0 - w_all.at({r, 5});
    for (std::size_t j = 0; j < 12; ++j) {
      if (j != 5) EXPECT_NEAR(w.at({r, j}), w_all.at({r, j}) / keep, 1e-12);
    }
  }
}

TEST_F(QueryFormerTest, PerTrackPoolingStaysOnOwnTrack) {
  auto o = opts();
  o.n_inter = 3;
  o.pool_scope = PoolScope::kPerTrack;
  QueryFormer<double> qf(store, "q", o);
  auto traj = make_traj(3, 4, kC, 60);
  Tensor<double> w;
  qf.inter(traj, random_matrix(1, kC, 61), 16, 16, &w);
  for (std::size_t q = 0; q < 3; ++q) {
    for (std::size_t j = 0; j < 12; ++j) {
      if (j / 4 != q) EXPECT_EQ(w.at({q, j}), 0.0);
    }
  }
  auto bad = make_traj(2, 4, kC, 62);
  EXPECT_THROW(qf.inter(bad, random_matrix(1, kC, 61), 16, 16), ValidationError);
}

TEST_F(QueryFormerTest, InterRejectsPointsOutsideFrame) {
  QueryFormer<double> qf(store, "q", opts());
  auto traj = make_traj(2, 2, kC, 70);
  traj.coords[0] = 40;
  EXPECT_THROW(qf.inter(traj, random_matrix(1, kC, 71), 16, 16), ValidationError);
  traj.valid[0] = 0;
  EXPECT_NO_THROW(qf.inter(traj, random_matrix(1, kC, 71), 16, 16));
}

TEST(TrajectoryCode, PeriodsSpanTwoToTwiceFrame) {
  auto c = trajectory_code(1.0, 0.0, 64, 64);
  ASSERT_EQ(c.size(), 32u);
  EXPECT_NEAR(c[0], 0.0, 1e-12);   // sin(pi * 1)
  EXPECT_NEAR(c[1], -1.0, 1e-12);  // cos(pi * 1)
  auto far = trajectory_code(64.0, 0.0, 64, 64);
  EXPECT_NEAR(far[14], 0.0, 1e-12);  // period 128: sin(pi)
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(c[16 + 2 * k], 0.0, 1e-12);
    EXPECT_NEAR(c[16 + 2 * k + 1], 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace tqf::query
