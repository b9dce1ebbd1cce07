#include "tqf/core/nn.hpp"

#include <cmath>

#include "tqf/core/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tqf {

namespace kernels {

int set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
  return omp_get_max_threads();
#else
  (void)n;
  return 1;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kernels

namespace nn {

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, bool bias)
    : in_(in), out_(out) {
  weight_ = store.create(name + ".weight", {in, out}, {InitSpec::Kind::kUniformFanIn, 0.0, in});
  if (bias) bias_ = store.create(name + ".bias", {out}, {InitSpec::Kind::kUniformFanIn, 0.0, in});
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ValidationError("linear layer expects [m x " + std::to_string(in_) + "], got " + shape_str(x.shape()));
  }
  Tensor<T> y = ops::matmul(x, weight_);
  return bias_.defined() ? ops::add_row(y, bias_) : y;
}

template <typename T>
Mlp<T>::Mlp(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
            std::size_t hidden, int depth)
    : depth_(depth) {
  if (depth != 1 && depth != 2) throw ValidationError("mlp depth must be 1 or 2");
  if (depth == 1) {
    first_ = Linear<T>(store, name + ".fc", in, out);
    return;
  }
  if (hidden == 0) hidden = 2 * in;
  first_ = Linear<T>(store, name + ".fc1", in, hidden);
  second_ = Linear<T>(store, name + ".fc2", hidden, out);
}

template <typename T>
Tensor<T> Mlp<T>::operator()(const Tensor<T>& x) const {
  if (depth_ == 1) return first_(x);
  return second_(ops::gelu(first_(x)));
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionOptions<T>& opts) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ValidationError("attention expects matrices");
  }
  if (q.dim(1) != k.dim(1)) {
    throw ValidationError("attention: query width " + std::to_string(q.dim(1)) + " != key width " +
                          std::to_string(k.dim(1)));
  }
  if (k.dim(0) != v.dim(0)) {
    throw ValidationError("attention: " + std::to_string(k.dim(0)) + " keys but " + std::to_string(v.dim(0)) +
                          " values");
  }
  Tensor<T> logits = ops::matmul_nt(q, k);
  if (opts.scale_logits) logits = ops::scale(logits, T(1) / std::sqrt(static_cast<T>(q.dim(1))));
  if (opts.bias) {
    if (opts.bias->shape() != logits.shape()) {
      throw ValidationError("attention bias " + shape_str(opts.bias->shape()) + " for logits " +
                            shape_str(logits.shape()));
    }
    logits = ops::add(logits, *opts.bias);
  }
  Tensor<T> weights = ops::softmax_rows(logits, opts.mask);
  if (opts.weights_out) *opts.weights_out = weights;
  return ops::matmul(weights, v);
}

template <typename T>
CrossAttention<T>::CrossAttention(ParamStore<T>& store, const std::string& name, std::size_t dim)
    : wq_(store, name + ".wq", dim, dim, false),
      wk_(store, name + ".wk", dim, dim, false),
      wv_(store, name + ".wv", dim, dim, false) {}

template <typename T>
Tensor<T> CrossAttention<T>::operator()(const Tensor<T>& queries, const Tensor<T>& context,
                                        const AttentionOptions<T>& opts) const {
  return scaled_dot_attention(wq_(queries), wk_(context), wv_(context), opts);
}

template <typename T>
void fill_params(ParamStore<T>& store, const std::string& prefix, T value) {
  bool any = false;
  for (auto& p : store.params()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    auto d = p.tensor.mutable_data();
    std::fill(d.begin(), d.end(), value);
    any = true;
  }
  if (!any) throw ValidationError("no parameters with prefix " + prefix);
}

template class Linear<float>;
template class Linear<double>;
template class Mlp<float>;
template class Mlp<double>;
template class CrossAttention<float>;
template class CrossAttention<double>;
template Tensor<float> scaled_dot_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                            const AttentionOptions<float>&);
template Tensor<double> scaled_dot_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const AttentionOptions<double>&);
template void fill_params(ParamStore<float>&, const std::string&, float);
template void fill_params(ParamStore<double>&, const std::string&, double);

}  // namespace nn
}  // namespace tqf
