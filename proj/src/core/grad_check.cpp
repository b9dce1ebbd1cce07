#include "tqf/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tqf {

namespace {

std::vector<std::size_t> pick_indices(std::span<const double> analytic, std::size_t limit) {
  const std::size_t n = analytic.size();
  std::vector<std::size_t> out;
  if (n <= limit) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  // Half from the entries that actually receive gradient, half spread evenly.
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < n; ++i) {
    if (analytic[i] != 0.0) live.push_back(i);
  }
  const std::size_t from_live = std::min(live.size(), limit / 2);
  for (std::size_t k = 0; k < from_live; ++k) out.push_back(live[k * live.size() / from_live]);
  const std::size_t rest = limit - from_live;
  for (std::size_t k = 0; k < rest; ++k) out.push_back(k * n / rest);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& f, ParamStore<double>& params,
                           const GradCheckOptions& opts) {
  params.zero_grad();
  Tensor<double> loss = f();
  const double base = loss.item();
  {
    NoGradGuard guard;
    const double again = f().item();
    if (std::memcmp(&base, &again, sizeof(double)) != 0) {
      throw ValidationError("grad_check: function is not deterministic (" + std::to_string(base) + " vs " +
                            std::to_string(again) + ")");
    }
  }
  backward(loss);

  GradCheckReport report;
  NoGradGuard guard;
  for (auto& p : params.params()) {
    std::vector<double> analytic(p.tensor.size(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());

    GradCheckEntry entry{p.name, 0, 0.0, true};
    auto data = p.tensor.mutable_data();
    for (std::size_t idx : pick_indices(analytic, opts.max_elements_per_param)) {
      const double saved = data[idx];
      data[idx] = saved + opts.eps;
      const double up = f().item();
      data[idx] = saved - opts.eps;
      const double down = f().item();
      data[idx] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), opts.floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic[idx] - numeric) / denom);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error <= opts.tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(entry);
  }
  params.zero_grad();
  return report;
}

}  // namespace tqf
