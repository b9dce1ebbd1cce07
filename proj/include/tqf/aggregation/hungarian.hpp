#pragma once

#include <vector>

namespace tqf::aggregation {

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double cost = 0;
};

/// Minimum-cost perfect matching of a square row-major cost matrix. Among
/// optimal assignments the lexicographically smallest row_to_col is returned.
/// Throws ValidationError on a non-finite entry or a non-square input.
Assignment hungarian(const std::vector<double>& cost, std::size_t n);

/// Optimal total cost only (no tie-break work).
double hungarian_cost(const std::vector<double>& cost, std::size_t n);

}  // namespace tqf::aggregation
