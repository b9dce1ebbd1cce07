#include "tqf/head/optimizer.hpp"

#include <cmath>

namespace tqf::head {

template <typename T>
AdamW<T>::AdamW(ParamStore<T>& store, const AdamWOptions& opts) : store_(store), opts_(opts) {
  for (const auto& p : store_.params()) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  auto& params = store_.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& tensor = params[k].tensor;
    if (!tensor.has_grad()) continue;
    const auto g = tensor.grad();
    auto w = tensor.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * gi;
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * gi * gi;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.eps) + opts_.weight_decay * w[i];
      w[i] = static_cast<T>(w[i] - opts_.lr * update);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace tqf::head
