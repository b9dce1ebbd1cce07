#pragma once

// Differentiable tensor operations. Matrices are rank-2 row-major tensors;
// anything with more axes is handled as "rows of the last axis" where noted.
// Every op validates shapes (ValidationError) and checks its output for
// non-finite values (NumericError).

#include <cstdint>
#include <optional>
#include <vector>

#include "tqf/core/tensor.hpp"

namespace tqf::ops {

using Mask = std::vector<std::uint8_t>;

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

// x[m x n] + b[n] broadcast over rows.
template <typename T> Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& b);

// a[m x k] * b[k x n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a[m x k] * b[n x k]^T
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

/// Softmax along `axis` with max subtraction. Throws NumericError naming the
/// offending index when the input is not finite.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Last-axis softmax of a matrix. Entries whose mask byte is 0 receive weight
/// exactly 0; a fully masked row is all zeros.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x, const Mask* mask = nullptr);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// Mean over the rows of a matrix -> [1 x n].
template <typename T> Tensor<T> mean_rows(const Tensor<T>& x);
// Sum of each row -> [m].
template <typename T> Tensor<T> sum_cols(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Treats x as rows of its trailing extent (shape[0] rows for rank >= 2, or
/// the whole tensor as one axis for rank 1 with row size 1) and gathers.
/// Output is [idx.size() x row] for matrices.
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& idx);

// [m x n1] ++ [m x n2] -> [m x (n1+n2)]
template <typename T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
// Stacks matrices with equal column counts.
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
// [1 x n] or [n] -> [m x n]
template <typename T> Tensor<T> repeat_rows(const Tensor<T>& x, std::size_t m);

/// Average pooling with a 2x2 window, stride 2 and ceil output size over a
/// [frames*h*w x c] stack of channels-last maps -> [frames*ceil(h/2)*ceil(w/2) x c].
template <typename T>
Tensor<T> avg_pool2x2(const Tensor<T>& x, std::size_t frames, std::size_t h, std::size_t w);

/// Row-wise cosine similarity of two [m x n] matrices -> [m]. A zero-norm row
/// yields 0 with zero gradient.
template <typename T> Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b);

/// Mean binary cross-entropy of sigmoid(logits) against `target`, logits
/// clamped to [-clamp, clamp].
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& target, T clamp = T(15));

/// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps) with p = sigmoid(logits).
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const std::vector<T>& target, T eps = T(1e-6));

/// Mean softmax cross-entropy of [m x c] logits against class labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels);

}  // namespace tqf::ops
