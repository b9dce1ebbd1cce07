#include "tqf/aggregation/hungarian.hpp"

#include <cmath>
#include <limits>

#include "tqf/core/tensor.hpp"

namespace tqf::aggregation {
namespace {

// Shortest augmenting path with potentials, O(n^3). Rows and columns are
// 1-based inside, with column 0 as the virtual source.
std::vector<std::size_t> solve(const std::vector<double>& a, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double total(const std::vector<double>& a, std::size_t n, const std::vector<std::size_t>& r2c) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i * n + r2c[i]];
  return s;
}

void check(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw ValidationError("hungarian: cost matrix is not square");
  for (std::size_t i = 0; i < cost.size(); ++i) {
    if (!std::isfinite(cost[i])) {
      throw ValidationError("hungarian: non-finite cost at (" + std::to_string(i / n) + ", " +
                            std::to_string(i % n) + ")");
    }
  }
}

}  // namespace

double hungarian_cost(const std::vector<double>& cost, std::size_t n) {
  check(cost, n);
  if (n == 0) return 0;
  return total(cost, n, solve(cost, n));
}

Assignment hungarian(const std::vector<double>& cost, std::size_t n) {
  check(cost, n);
  Assignment out;
  if (n == 0) return out;
  out.cost = total(cost, n, solve(cost, n));
  const double tol = 1e-9 * (1.0 + std::fabs(out.cost));

  // Fix rows in order to the smallest column that still admits an optimum.
  std::vector<std::size_t> free_cols(n);
  for (std::size_t j = 0; j < n; ++j) free_cols[j] = j;
  double fixed_cost = 0;
  out.row_to_col.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t m = n - r - 1;
    for (std::size_t ci = 0; ci < free_cols.size(); ++ci) {
      const std::size_t c = free_cols[ci];
      double rest = 0;
      if (m > 0) {
        std::vector<double> sub(m * m);
        for (std::size_t i = 0; i < m; ++i) {
          std::size_t col = 0;
          for (std::size_t cj = 0; cj < free_cols.size(); ++cj) {
            if (cj == ci) continue;
            sub[i * m + col++] = cost[(r + 1 + i) * n + free_cols[cj]];
          }
        }
        rest = total(sub, m, solve(sub, m));
      }
      if (fixed_cost + cost[r * n + c] + rest <= out.cost + tol) {
        out.row_to_col[r] = c;
        fixed_cost += cost[r * n + c];
        free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(ci));
        break;
      }
    }
  }
  out.cost = total(cost, n, out.row_to_col);
  return out;
}

}  // namespace tqf::aggregation
