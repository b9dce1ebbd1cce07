#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tqf/core/kernels.hpp"

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Shapes follow the pixel-embedding product: (T*H*W) x C1 times C1 x N.
template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0)), n = 16, k = 32;
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    if constexpr (Parallel) {
      tqf::kernels::parallel::gemm_nn(m, n, k, a.data(), b.data(), c.data());
    } else {
      tqf::kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

template <bool Parallel>
void BM_GemmTN(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0)), n = 32, k = 16;
  const auto a = random_vec(m * k, 3), b = random_vec(m * n, 4);
  std::vector<float> c(k * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    if constexpr (Parallel) {
      tqf::kernels::parallel::gemm_tn(m, n, k, a.data(), b.data(), c.data());
    } else {
      tqf::kernels::serial::gemm_tn(m, n, k, a.data(), b.data(), c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), cols = 4096;
  const auto x = random_vec(rows * cols, 5);
  std::vector<std::uint8_t> mask(rows * cols, 1);
  for (std::size_t i = 0; i < mask.size(); i += 7) mask[i] = 0;
  std::vector<float> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      tqf::kernels::parallel::softmax_rows(rows, cols, x.data(), mask.data(), y.data());
    } else {
      tqf::kernels::serial::softmax_rows(rows, cols, x.data(), mask.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols));
}

}  // namespace

BENCHMARK(BM_GemmNN<false>)->Arg(4096)->Arg(32768);
BENCHMARK(BM_GemmNN<true>)->Arg(4096)->Arg(32768)->UseRealTime();
BENCHMARK(BM_GemmTN<false>)->Arg(4096)->Arg(32768);
BENCHMARK(BM_GemmTN<true>)->Arg(4096)->Arg(32768)->UseRealTime();
BENCHMARK(BM_Softmax<false>)->Arg(16)->Arg(128);
BENCHMARK(BM_Softmax<true>)->Arg(16)->Arg(128)->UseRealTime();

BENCHMARK_MAIN();
