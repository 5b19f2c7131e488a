// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "nmt/bpe.hpp"
#include "nmt/data.hpp"

namespace {

const nmt::WordCounts& counts() {
  static const nmt::WordCounts c = nmt::word_counts(nmt::read_corpus(std::string(NMT_FIXTURE_DIR) + "/bpe_corpus.txt"));
  return c;
}

void BM_BpeLearn(benchmark::State& state) {
  const auto merges = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(nmt::bpe_learn(counts(), merges));
}
BENCHMARK(BM_BpeLearn)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_BpeApply(benchmark::State& state) {
  nmt::BpeSegmenter seg(nmt::bpe_learn(counts(), 500));
  for (auto _ : state) {
    for (const auto& [word, n] : counts()) benchmark::DoNotOptimize(seg.apply(word));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(counts().size()));
}
BENCHMARK(BM_BpeApply);

}  // namespace

BENCHMARK_MAIN();
