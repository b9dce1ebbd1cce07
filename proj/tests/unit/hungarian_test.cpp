#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tqf/aggregation/hungarian.hpp"
#include "tqf/core/tensor.hpp"

namespace tqf::aggregation {
namespace {

double brute_force(const std::vector<double>& cost, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i * n + p[i]];
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

double assignment_cost(const std::vector<double>& cost, std::size_t n, const std::vector<std::size_t>& p) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += cost[i * n + p[i]];
  return s;
}

TEST(Hungarian, IdentityFavoringCost) {
  const std::size_t n = 5;
  std::vector<double> cost(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) cost[i * n + i] = 0;
  auto a = hungarian(cost, n);
  EXPECT_EQ(a.cost, 0.0);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(a.row_to_col[i], i);
}

TEST(Hungarian, CyclicZeros) {
  std::vector<double> cost{0, 1, 2, 1, 2, 0, 2, 0, 1};
  auto a = hungarian(cost, 3);
  EXPECT_EQ(a.cost, 0.0);
  EXPECT_EQ(a.row_to_col, (std::vector<std::size_t>{0, 2, 1}));
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> real(-5, 5);
  std::uniform_int_distribution<int> small(0, 3);
  for (std::size_t n = 2; n <= 7; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> cost(n * n);
      // Half the trials use small integers so that ties are common.
      for (auto& c : cost) c = trial % 2 ? real(rng) : small(rng);
      auto a = hungarian(cost, n);
      const double oracle = brute_force(cost, n);
      EXPECT_EQ(a.cost, oracle) << "n=" << n << " trial=" << trial;
      EXPECT_EQ(assignment_cost(cost, n, a.row_to_col), a.cost);
      EXPECT_EQ(hungarian_cost(cost, n), a.cost);
      auto sorted = a.row_to_col;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(sorted[i], i);
    }
  }
}

TEST(Hungarian, LexicographicTieBreak) {
  std::vector<double> cost(16, 1.0);
  auto a = hungarian(cost, 4);
  EXPECT_EQ(a.row_to_col, (std::vector<std::size_t>{0, 1, 2, 3}));
  // Two optima: (1, 0) and (0, 1); the smaller sequence wins.
  std::vector<double> tie{2, 1, 1, 2};
  EXPECT_EQ(hungarian(tie, 2).row_to_col, (std::vector<std::size_t>{1, 0}));
}

TEST(Hungarian, RejectsBadInput) {
  EXPECT_THROW(hungarian({1, 2, 3}, 2), ValidationError);
  EXPECT_THROW(hungarian({0, std::nan(""), 1, 0}, 2), ValidationError);
  EXPECT_THROW(hungarian({0, INFINITY, 1, 0}, 2), ValidationError);
  EXPECT_EQ(hungarian({}, 0).row_to_col.size(), 0u);
}

}  // namespace
}  // namespace tqf::aggregation
