#include "tqf/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tqf/core/kernels.hpp"

namespace tqf::ops {

namespace {

template <typename T>
using Backward = std::function<void(Node<T>&)>;

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs, Backward<T> bw) {
  check_finite<T>(values, op);
  Tensor<T> out(std::move(shape), std::move(values));
  Node<T>* node = out.node();
  node->op = op;
  if (!grad_enabled()) return out;
  bool track = false;
  for (const Tensor<T>* in : inputs) track = track || in->requires_grad();
  if (!track) return out;
  node->requires_grad = true;
  for (const Tensor<T>* in : inputs) node->parents.push_back(in->node_ptr());
  node->backward_fn = std::move(bw);
  return out;
}

// Parent gradient buffer, or nullptr if that parent is not tracked.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) throw ValidationError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>("sub", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return make_result<T>("scale", a.shape(), std::move(out), {&a}, [s](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
  return make_result<T>("add_scalar", a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& b) {
  require_matrix(x, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (b.size() != n) {
    throw ValidationError("add_row: bias of " + shape_str(b.shape()) + " for " + shape_str(x.shape()));
  }
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
  }
  return make_result<T>("add_row", x.shape(), std::move(out), {&x, &b}, [m, n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ValidationError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " +
                          shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  kernels::parallel::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [m, n, k](Node<T>& self) {
    const T* av = self.parents[0]->value.data();
    const T* bv = self.parents[1]->value.data();
    if (T* g = parent_grad(self, 0)) {
      // dA = dC * B^T
      std::vector<T> bt(n * k);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
      }
      kernels::parallel::gemm_nn(m, k, n, self.grad.data(), bt.data(), g);
    }
    if (T* g = parent_grad(self, 1)) {
      // dB = A^T * dC
      kernels::parallel::gemm_tn(m, n, k, av, self.grad.data(), g);
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ValidationError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " * " +
                          shape_str(b.shape()) + "^T");
  }
  std::vector<T> bt(k * n);
  const T* bv = b.data().data();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = bv[j * k + p];
  }
  std::vector<T> out(m * n, T(0));
  kernels::parallel::gemm_nn(m, n, k, a.data().data(), bt.data(), out.data());
  return make_result<T>("matmul_nt", {m, n}, std::move(out), {&a, &b}, [m, n, k](Node<T>& self) {
    const T* av = self.parents[0]->value.data();
    const T* bv = self.parents[1]->value.data();
    if (T* g = parent_grad(self, 0)) {
      // dA = dC * B
      kernels::parallel::gemm_nn(m, k, n, self.grad.data(), bv, g);
    }
    if (T* g = parent_grad(self, 1)) {
      // dB = dC^T * A
      kernels::parallel::gemm_tn(m, k, n, self.grad.data(), av, g);
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_matrix(x, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  }
  return make_result<T>("transpose", {n, m}, std::move(out), {&x}, [m, n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_result<T>("gelu", x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const T v = xv[i];
        const T u = kC * (v + kA * v * v * v);
        const T th = std::tanh(u);
        const T du = kC * (T(1) + T(3) * kA * v * v);
        const T d = T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du;
        g[i] += self.grad[i] * d;
      }
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        if (xv[i] > T(0)) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x[i]);
  return make_result<T>("sigmoid", x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const T y = self.value[i];
        g[i] += self.grad[i] * y * (T(1) - y);
      }
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ValidationError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  check_finite<T>(x.data(), "softmax input");
  std::size_t outer = 1, inner = 1;
  const std::size_t len = x.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {&x}, [outer, inner, len](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = 0;
          for (std::size_t j = 0; j < len; ++j) {
            dot += self.value[base + j * inner] * self.grad[base + j * inner];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = base + j * inner;
            g[idx] += self.value[idx] * (self.grad[idx] - dot);
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const Mask* mask) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (mask && mask->size() != m * n) {
    throw ValidationError("softmax_rows: mask size " + std::to_string(mask->size()) + " for " +
                          shape_str(x.shape()));
  }
  check_finite<T>(x.data(), "softmax input");
  std::vector<T> out(m * n);
  kernels::parallel::softmax_rows(m, n, x.data().data(), mask ? mask->data() : nullptr, out.data());
  return make_result<T>("softmax_rows", x.shape(), std::move(out), {&x}, [m, n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      kernels::parallel::softmax_rows_backward(m, n, self.value.data(), self.grad.data(), g);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {}, {total}, {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw ValidationError("mean of an empty tensor");
  T total = 0;
  for (T v : x.data()) total += v;
  const T inv = T(1) / static_cast<T>(x.size());
  return make_result<T>("mean", {}, {total * inv}, {&x}, [inv](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0] * inv;
    }
  });
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  require_matrix(x, "mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (m == 0) throw ValidationError("mean_rows of a matrix with no rows");
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  }
  const T inv = T(1) / static_cast<T>(m);
  for (auto& v : out) v *= inv;
  return make_result<T>("mean_rows", {1, n}, std::move(out), {&x}, [m, n, inv](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
      }
    }
  });
}

template <typename T>
Tensor<T> sum_cols(const Tensor<T>& x) {
  require_matrix(x, "sum_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  }
  return make_result<T>("sum_cols", {m}, std::move(out), {&x}, [m, n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ValidationError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result<T>("reshape", std::move(shape), x.values(), {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& idx) {
  if (x.rank() == 0) throw ValidationError("gather_rows on a scalar");
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows ? x.size() / rows : 0;
  std::vector<T> out(idx.size() * width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw ValidationError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                            shape_str(x.shape()));
    }
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  Shape shape = x.shape();
  shape[0] = idx.size();
  return make_result<T>("gather_rows", std::move(shape), std::move(out), {&x}, [idx, width](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        T* dst = g + idx[r] * width;
        const T* src = self.grad.data() + r * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  const std::size_t m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  if (b.dim(0) != m) {
    throw ValidationError("concat_cols: row counts differ " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
  const std::size_t n = na + nb;
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < na; ++j) out[i * n + j] = a[i * na + j];
    for (std::size_t j = 0; j < nb; ++j) out[i * n + na + j] = b[i * nb + j];
  }
  return make_result<T>("concat_cols", {m, n}, std::move(out), {&a, &b}, [m, na, nb, n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < na; ++j) g[i * na + j] += self.grad[i * n + j];
      }
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < nb; ++j) g[i * nb + j] += self.grad[i * n + na + j];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows of nothing");
  const std::size_t n = parts.front().rank() == 2 ? parts.front().dim(1) : parts.front().size();
  std::size_t m = 0;
  for (const auto& p : parts) {
    const std::size_t pn = p.rank() == 2 ? p.dim(1) : p.size();
    if (pn != n) throw ValidationError("concat_rows: column counts differ");
    m += p.size() / n;
  }
  std::vector<T> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  // make_result takes an initializer_list; assemble tracking by hand.
  check_finite<T>(out, "concat_rows");
  Tensor<T> result({m, n}, std::move(out));
  Node<T>* node = result.node();
  node->op = "concat_rows";
  if (!grad_enabled()) return result;
  bool track = false;
  for (const auto& p : parts) track = track || p.requires_grad();
  if (!track) return result;
  node->requires_grad = true;
  for (const auto& p : parts) node->parents.push_back(p.node_ptr());
  node->backward_fn = [](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t len = self.parents[k]->value.size();
      if (T* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  };
  return result;
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& x, std::size_t m) {
  const std::size_t n = x.size();
  if (x.rank() == 2 && x.dim(0) != 1) {
    throw ValidationError("repeat_rows expects a single row, got " + shape_str(x.shape()));
  }
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy(x.data().begin(), x.data().end(), out.begin() + i * n);
  return make_result<T>("repeat_rows", {m, n}, std::move(out), {&x}, [m, n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    }
  });
}

template <typename T>
Tensor<T> avg_pool2x2(const Tensor<T>& x, std::size_t frames, std::size_t h, std::size_t w) {
  require_matrix(x, "avg_pool2x2");
  if (x.dim(0) != frames * h * w) {
    throw ValidationError("avg_pool2x2: " + shape_str(x.shape()) + " is not " + std::to_string(frames) + "x" +
                          std::to_string(h) + "x" + std::to_string(w) + " rows");
  }
  const std::size_t c = x.dim(1);
  const std::size_t h2 = (h + 1) / 2, w2 = (w + 1) / 2;
  // For each output row, its source rows and weight.
  std::vector<std::size_t> src;
  std::vector<std::size_t> start(frames * h2 * w2 + 1, 0);
  std::vector<T> weight(frames * h2 * w2);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t y = 0; y < h2; ++y) {
      for (std::size_t xx = 0; xx < w2; ++xx) {
        const std::size_t o = (f * h2 + y) * w2 + xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t sy = 2 * y + dy, sx = 2 * xx + dx;
            if (sy < h && sx < w) src.push_back((f * h + sy) * w + sx);
          }
        }
        start[o + 1] = src.size();
        weight[o] = T(1) / static_cast<T>(start[o + 1] - start[o]);
      }
    }
  }
  const std::size_t rows = frames * h2 * w2;
  std::vector<T> out(rows * c, T(0));
  for (std::size_t o = 0; o < rows; ++o) {
    T* dst = out.data() + o * c;
    for (std::size_t s = start[o]; s < start[o + 1]; ++s) {
      const T* row = x.data().data() + src[s] * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) dst[j] *= weight[o];
  }
  return make_result<T>("avg_pool2x2", {rows, c}, std::move(out), {&x},
                        [src = std::move(src), start = std::move(start), weight = std::move(weight), rows,
                         c](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            for (std::size_t o = 0; o < rows; ++o) {
                              const T* up = self.grad.data() + o * c;
                              for (std::size_t s = start[o]; s < start[o + 1]; ++s) {
                                T* dst = g + src[s] * c;
                                for (std::size_t j = 0; j < c; ++j) dst[j] += up[j] * weight[o];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "cosine_rows");
  require_same_shape(a, b, "cosine_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m, T(0));
  std::vector<T> norms(2 * m, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = a[i * n + j], y = b[i * n + j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    norms[2 * i] = static_cast<T>(std::sqrt(na));
    norms[2 * i + 1] = static_cast<T>(std::sqrt(nb));
    if (na > 0 && nb > 0) out[i] = static_cast<T>(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
  }
  return make_result<T>("cosine_rows", {m}, std::move(out), {&a, &b}, [m, n, norms](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    T* ga = parent_grad(self, 0);
    T* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const T na = norms[2 * i], nb = norms[2 * i + 1];
      if (na == T(0) || nb == T(0)) continue;
      const T c = self.value[i];
      const T up = self.grad[i];
      for (std::size_t j = 0; j < n; ++j) {
        const T x = av[i * n + j], y = bv[i * n + j];
        if (ga) ga[i * n + j] += up * (y / (na * nb) - c * x / (na * na));
        if (gb) gb[i * n + j] += up * (x / (na * nb) - c * y / (nb * nb));
      }
    }
  });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& target, T clamp) {
  if (target.size() != logits.size()) {
    throw ValidationError("bce_with_logits: target size " + std::to_string(target.size()) + " for " +
                          shape_str(logits.shape()));
  }
  const std::size_t count = logits.size();
  if (count == 0) throw ValidationError("bce_with_logits on an empty tensor");
  T total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T z = std::clamp(logits[i], -clamp, clamp);
    total += std::max(z, T(0)) - z * target[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const T inv = T(1) / static_cast<T>(count);
  return make_result<T>("bce_with_logits", {}, {total * inv}, {&logits},
                        [target, clamp, inv](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            const auto& lv = self.parents[0]->value;
                            const T up = self.grad[0] * inv;
                            for (std::size_t i = 0; i < lv.size(); ++i) {
                              if (lv[i] <= -clamp || lv[i] >= clamp) continue;
                              g[i] += up * (sigmoid_scalar(lv[i]) - target[i]);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const std::vector<T>& target, T eps) {
  if (target.size() != logits.size()) {
    throw ValidationError("dice_loss: target size " + std::to_string(target.size()) + " for " +
                          shape_str(logits.shape()));
  }
  const std::size_t count = logits.size();
  std::vector<T> prob(count);
  T inter = 0, psum = 0, gsum = 0;
  for (std::size_t i = 0; i < count; ++i) {
    prob[i] = sigmoid_scalar(logits[i]);
    inter += prob[i] * target[i];
    psum += prob[i];
    gsum += target[i];
  }
  const T num = T(2) * inter + eps;
  const T den = psum + gsum + eps;
  return make_result<T>("dice_loss", {}, {T(1) - num / den}, {&logits},
                        [target, prob = std::move(prob), num, den](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            const T up = self.grad[0];
                            for (std::size_t i = 0; i < prob.size(); ++i) {
                              const T dp = -(T(2) * target[i] * den - num) / (den * den);
                              g[i] += up * dp * prob[i] * (T(1) - prob[i]);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (labels.size() != m) throw ValidationError("cross_entropy: label count mismatch");
  std::vector<T> prob(m * c);
  kernels::serial::softmax_rows<T>(m, c, logits.data().data(), nullptr, prob.data());
  T total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= c) throw ValidationError("cross_entropy: label out of range");
    const T* row = logits.data().data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T lse = 0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    total += mx + std::log(lse) - row[labels[i]];
  }
  const T inv = T(1) / static_cast<T>(m);
  return make_result<T>("cross_entropy", {}, {total * inv}, {&logits},
                        [labels, prob = std::move(prob), m, c, inv](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            const T up = self.grad[0] * inv;
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t j = 0; j < c; ++j) {
                                const T onehot = j == labels[i] ? T(1) : T(0);
                                g[i * c + j] += up * (prob[i * c + j] - onehot);
                              }
                            }
                          }
                        });
}

#define TQF_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> transpose(const Tensor<T>&);                                                \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> softmax_rows(const Tensor<T>&, const Mask*);                                \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> mean_rows(const Tensor<T>&);                                                \
  template Tensor<T> sum_cols(const Tensor<T>&);                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);             \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                 \
  template Tensor<T> repeat_rows(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> cosine_rows(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> avg_pool2x2(const Tensor<T>&, std::size_t, std::size_t, std::size_t);       \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const std::vector<T>&, T);                \
  template Tensor<T> dice_loss(const Tensor<T>&, const std::vector<T>&, T);                      \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<std::size_t>&);

TQF_INSTANTIATE_OPS(float)
TQF_INSTANTIATE_OPS(double)

}  // namespace tqf::ops
