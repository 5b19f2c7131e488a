// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "nmt/layers.hpp"
#include "nmt/ops.hpp"

namespace {

void cell_step(benchmark::State& state, nmt::CellKind kind) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 32;
  nmt::Rng rng(1);
  nmt::ParameterSet params;
  nmt::RecurrentCell cell(params, "cell", kind, d, d, rng);
  const nmt::Tensor x({batch, d}, 0.1f);
  for (auto _ : state) {
    nmt::Tape tape;
    nmt::CellState s = cell.zero_state(tape, batch);
    const nmt::Expr in = tape.constant(x);
    for (int t = 0; t < 10; ++t) s = cell.step(tape, in, s);
    tape.backward(nmt::sum(s.h));
    benchmark::DoNotOptimize(s.h.value());
  }
  state.SetItemsProcessed(state.iterations() * 10 * static_cast<std::int64_t>(batch));
}

void BM_GruForwardBackward(benchmark::State& state) { cell_step(state, nmt::CellKind::kGru); }
void BM_LstmForwardBackward(benchmark::State& state) { cell_step(state, nmt::CellKind::kLstm); }
BENCHMARK(BM_GruForwardBackward)->Arg(32)->Arg(128);
BENCHMARK(BM_LstmForwardBackward)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
