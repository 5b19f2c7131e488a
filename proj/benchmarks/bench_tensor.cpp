// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "nmt/tensor.hpp"

namespace {

nmt::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1, 1);
  nmt::Tensor t({rows, cols});
  for (auto& v : t) v = dist(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nmt::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_MatmulNt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(32, n, 3), b = random_matrix(n, n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(nmt::matmul_nt(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * 32 * n * n));
}
BENCHMARK(BM_MatmulNt)->RangeMultiplier(2)->Range(32, 256);

void BM_Softmax(benchmark::State& state) {
  const auto v = static_cast<std::size_t>(state.range(0));
  const auto s = random_matrix(32, v, 5);
  for (auto _ : state) benchmark::DoNotOptimize(nmt::softmax(s));
}
BENCHMARK(BM_Softmax)->Arg(1000)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
