// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <memory>

#include "nmt/decode.hpp"

namespace {

const nmt::Seq2Seq& model() {
  static const auto m = [] {
    nmt::ModelConfig c;
    c.src_vocab = c.tgt_vocab = 1000;
    c.embed = 64;
    c.hidden = 128;
    c.attention = 64;
    nmt::Rng rng(1);
    return std::make_unique<nmt::Seq2Seq>(c, rng);
  }();
  return *m;
}

void BM_BeamSearch(benchmark::State& state) {
  nmt::BeamOptions opt;
  opt.beam = static_cast<std::size_t>(state.range(0));
  opt.max_len = 20;
  const std::vector<int> source{10, 42, 7, 300, 12, 99, 5, 18, 640, 23};
  for (auto _ : state) benchmark::DoNotOptimize(nmt::beam_search(model(), source, opt));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_ForceScore(benchmark::State& state) {
  const std::vector<int> source{10, 42, 7, 300, 12, 99, 5, 18, 640, 23};
  const std::vector<int> target{11, 43, 8, 301, 13, 100, 6, 19, 641, 24};
  for (auto _ : state) benchmark::DoNotOptimize(nmt::force_score(model(), source, target));
}
BENCHMARK(BM_ForceScore)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
