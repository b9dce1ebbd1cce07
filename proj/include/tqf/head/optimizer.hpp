#pragma once

#include <vector>

#include "tqf/core/param.hpp"

namespace tqf::head {

struct AdamWOptions {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay. Moments are kept in double.
template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& store, const AdamWOptions& opts);

  /// Applies one update from the parameters' current gradients.
  void step();
  std::size_t steps() const { return t_; }
  const AdamWOptions& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }

 private:
  ParamStore<T>& store_;
  AdamWOptions opts_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace tqf::head
