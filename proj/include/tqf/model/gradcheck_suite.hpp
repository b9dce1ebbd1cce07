#pragma once

#include <string>
#include <vector>

#include "tqf/core/grad_check.hpp"

namespace tqf::model {

struct ModuleCheck {
  std::string module;
  GradCheckReport report;
  double seconds = 0;
};

/// Finite-difference checks in double precision on micro instances of every
/// parameterized stage (text, pyramid, query_former, frame_decoder,
/// aggregation, head_loss) and of the whole pipeline loss. With `inject_bug`
/// each probe adds a term whose analytic gradient is deliberately wrong.
std::vector<ModuleCheck> run_gradcheck_suite(const GradCheckOptions& opts = {}, bool inject_bug = false);

}  // namespace tqf::model
