#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tqf/core/param.hpp"

namespace tqf {

struct GradCheckOptions {
  double eps = 1e-6;
  double tol = 1e-5;
  // Denominator floor of the relative error, so that gradients which are zero
  // up to round-off are judged on an absolute scale.
  double floor = 1e-3;
  // Parameters with more elements are checked on a deterministic subset.
  std::size_t max_elements_per_param = 48;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool pass = true;
};

/// Compares the analytic gradient of the scalar `f` against central
/// differences, per parameter. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
///
/// Throws ValidationError if two evaluations of `f` at the same point differ.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f, ParamStore<double>& params,
                           const GradCheckOptions& opts = {});

}  // namespace tqf
