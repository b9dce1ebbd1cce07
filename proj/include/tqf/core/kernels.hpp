#pragma once

// Dense inner loops used by the differentiable ops.
//
// Every kernel exists twice: `serial::` is the plain reference loop kept for
// testing, `parallel::` splits the outermost output dimension across OpenMP
// threads. Each output element is produced by exactly one thread with the same
// summation order as the serial loop, so both variants are bit-identical and
// results do not depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

namespace tqf::kernels {

// Below this many multiply-adds the parallel variants fall back to serial.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

namespace serial {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < k; ++i) {
    T* ci = c + i * n;
    for (std::size_t r = 0; r < m; ++r) {
      const T av = a[r * k + i];
      if (av == T(0)) continue;
      const T* br = b + r * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * br[j];
    }
  }
}

// Row softmax over `cols`, entries with mask==0 get weight exactly 0. A row
// with nothing allowed becomes all zeros.
template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, const std::uint8_t* mask, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    const std::uint8_t* mr = mask ? mask + r * cols : nullptr;
    T* yr = y + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!mr || mr[j]) mx = std::max(mx, xr[j]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(yr, yr + cols, T(0));
      continue;
    }
    T total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const T e = (!mr || mr[j]) ? std::exp(xr[j] - mx) : T(0);
      yr[j] = e;
      total += e;
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

// dx = y * (dy - <dy, y>) per row.
template <typename T>
void softmax_rows_backward(std::size_t rows, std::size_t cols, const T* y, const T* dy, T* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* yr = y + r * cols;
    const T* gr = dy + r * cols;
    T dot = 0;
    for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
    T* dr = dx + r * cols;
    for (std::size_t j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
  }
}

}  // namespace serial

namespace parallel {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m * n * k < kParallelThreshold || m < 2) return serial::gemm_nn(m, n, k, a, b, c);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    serial::gemm_nn<T>(1, n, k, a + i * k, b, c + i * n);
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m * n * k < kParallelThreshold || k < 2) return serial::gemm_tn(m, n, k, a, b, c);
  const auto out_rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < out_rows; ++i) {
    T* ci = c + i * n;
    for (std::size_t r = 0; r < m; ++r) {
      const T av = a[r * k + i];
      if (av == T(0)) continue;
      const T* br = b + r * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * br[j];
    }
  }
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, const std::uint8_t* mask, T* y) {
  if (rows * cols < kParallelThreshold) return serial::softmax_rows(rows, cols, x, mask, y);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    serial::softmax_rows<T>(1, cols, x + r * cols, mask ? mask + r * cols : nullptr, y + r * cols);
  }
}

template <typename T>
void softmax_rows_backward(std::size_t rows, std::size_t cols, const T* y, const T* dy, T* dx) {
  if (rows * cols < kParallelThreshold) return serial::softmax_rows_backward(rows, cols, y, dy, dx);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    serial::softmax_rows_backward<T>(1, cols, y + r * cols, dy + r * cols, dx + r * cols);
  }
}

}  // namespace parallel

// Sets the OpenMP thread count when built with OpenMP; returns the count in
// effect (1 without OpenMP).
int set_num_threads(int n);
int num_threads();

}  // namespace tqf::kernels
