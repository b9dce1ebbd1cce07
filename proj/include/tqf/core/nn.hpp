#pragma once

#include <string>

#include "tqf/core/ops.hpp"
#include "tqf/core/param.hpp"

namespace tqf::nn {

// y = x W + b with W stored [in x out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, bool bias = true);

  Tensor<T> operator()(const Tensor<T>& x) const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  const Tensor<T>& weight() const { return weight_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

/// Two linear layers with GELU between; hidden width defaults to 2x input.
/// depth=1 degenerates to a single linear layer.
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
      std::size_t hidden = 0, int depth = 2);

  Tensor<T> operator()(const Tensor<T>& x) const;

 private:
  int depth_ = 2;
  Linear<T> first_;
  Linear<T> second_;
};

template <typename T>
struct AttentionOptions {
  const Tensor<T>* bias = nullptr;  // [n x m] added to the logits
  const ops::Mask* mask = nullptr;  // [n x m], 0 = key not visible
  bool scale_logits = true;         // divide logits by sqrt(c)
  Tensor<T>* weights_out = nullptr; // receives the [n x m] attention weights
};

/// softmax(Q K^T / sqrt(c) + bias) V for Q[n x c], K[m x c], V[m x c'].
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionOptions<T>& opts = {});

/// Single-head attention with learned query/key/value projections.
template <typename T>
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(ParamStore<T>& store, const std::string& name, std::size_t dim);

  Tensor<T> operator()(const Tensor<T>& queries, const Tensor<T>& context,
                       const AttentionOptions<T>& opts = {}) const;

 private:
  Linear<T> wq_;
  Linear<T> wk_;
  Linear<T> wv_;
};

/// Sets every parameter whose name starts with `prefix` to `value`.
template <typename T>
void fill_params(ParamStore<T>& store, const std::string& prefix, T value);

}  // namespace tqf::nn
