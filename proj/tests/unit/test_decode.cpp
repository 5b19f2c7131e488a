// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "brute_force.hpp"
#include "nmt/decode.hpp"

namespace nmt {
namespace {

ModelConfig tiny(Arch arch, std::size_t vocab = 6) {
  ModelConfig c;
  c.arch = arch;
  c.src_vocab = vocab;
  c.tgt_vocab = vocab;
  c.embed = 3;
  c.hidden = 3;
  c.attention = 3;
  return c;
}

// Beam search against enumeration ------------------------------------------------

class BeamOracle : public ::testing::TestWithParam<Arch> {};

TEST_P(BeamOracle, ExhaustiveBeamFindsBruteForceOptimum) {
  const std::size_t limit = 4;
  const auto outputs = testing::all_outputs(6, limit);
  ASSERT_EQ(outputs.size(), 1u + 3u + 9u + 27u);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(100 + seed);
    ModelConfig c = tiny(GetParam());
    if (GetParam() == Arch::kGru) c.coverage = c.fertility = seed % 2 == 1;
    Seq2Seq m(c, rng);
    testing::sharpen(m, 4.0f);
    const std::vector<int> src{4, 5, static_cast<int>(4 + seed % 2)};
    for (bool normalize : {false, true}) {
      BeamOptions opt;
      opt.beam = 1000;
      opt.max_len = limit;
      opt.normalize = normalize;
      auto beam = beam_search(m, src, opt);
      ASSERT_FALSE(beam.empty());
      EXPECT_EQ(beam.size(), outputs.size());
      auto brute = testing::brute_force_best(
          outputs, [&](const std::vector<int>& y) { return testing::teacher_forced_log_prob(m, src, y); }, normalize);
      EXPECT_NEAR(beam.front().final_score, brute.score, 1e-5) << "seed " << seed;
      if (brute.score - brute.runner_up > 1e-4) EXPECT_EQ(beam.front().tokens, brute.tokens) << "seed " << seed;
    }
  }
}

TEST_P(BeamOracle, BeamOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(200 + seed);
    Seq2Seq m(tiny(GetParam()), rng);
    testing::sharpen(m, 3.0f);
    const std::vector<int> src{5, 4, 4, 5};
    BeamOptions opt;
    opt.beam = 1;
    const Seq2Seq* members[] = {&m};
    Hypothesis g = greedy(members, src, opt);
    auto b = beam_search(m, src, opt);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b.front().tokens, g.tokens);
    EXPECT_NEAR(b.front().score, g.score, 1e-9);
    EXPECT_EQ(b.front().complete, g.complete);
  }
}

INSTANTIATE_TEST_SUITE_P(Decode, BeamOracle, ::testing::Values(Arch::kRnn, Arch::kLstm, Arch::kGru, Arch::kSelfAttn),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Beam, NbestIsSortedCompleteAndBounded) {
  Rng rng(1);
  Seq2Seq m(tiny(Arch::kGru), rng);
  BeamOptions opt;
  opt.beam = 4;
  auto nbest = beam_search(m, {4, 5, 4}, opt);
  ASSERT_FALSE(nbest.empty());
  EXPECT_LE(nbest.size(), 4u);
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    if (i > 0) EXPECT_GE(nbest[i - 1].final_score, nbest[i].final_score);
    if (nbest[i].complete) EXPECT_EQ(nbest[i].tokens.back(), kEosId);
    EXPECT_EQ(nbest[i].alignment.size(), nbest[i].tokens.size());
    for (const auto& row : nbest[i].alignment) EXPECT_EQ(row.size(), 5u);
    EXPECT_LE(nbest[i].tokens.size(), max_output_length(3, opt));
    for (int y : nbest[i].tokens) {
      EXPECT_NE(y, kPadId);
      EXPECT_NE(y, kBosId);
    }
  }
}

TEST(Beam, ScoresEqualForcedScores) {
  Rng rng(2);
  Seq2Seq m(tiny(Arch::kLstm), rng);
  BeamOptions opt;
  opt.beam = 3;
  const std::vector<int> src{5, 5, 4};
  for (const auto& h : beam_search(m, src, opt)) {
    if (!h.complete) continue;
    std::vector<int> words(h.tokens.begin(), h.tokens.end() - 1);
    EXPECT_NEAR(h.score, force_score(m, src, words).total, 1e-9);
  }
}

TEST(Beam, LengthLimitAndTruncation) {
  EXPECT_EQ(max_output_length(7, BeamOptions{}), 19u);
  BeamOptions fixed;
  fixed.max_len = 3;
  EXPECT_EQ(max_output_length(100, fixed), 3u);

  Rng rng(3);
  Seq2Seq m(tiny(Arch::kGru), rng);
  m.params().at("out.b").value[kEosId] = -30.0f;
  BeamOptions opt;
  opt.beam = 2;
  opt.max_len = 3;
  auto out = beam_search(m, {4, 5}, opt);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out.front().truncated);
  EXPECT_FALSE(out.front().complete);
  EXPECT_EQ(out.front().tokens.size(), 3u);
  opt.beam = 0;
  EXPECT_THROW(beam_search(m, {4}, opt), ConfigError);
  opt.beam = 1;
  EXPECT_THROW(beam_search(m, {}, opt), DataError);
}

TEST(Beam, CoveragePenaltiesShiftFinalScores) {
  Rng rng(4);
  ModelConfig c = tiny(Arch::kGru);
  c.coverage = true;
  Seq2Seq m(c, rng);
  BeamOptions opt;
  opt.beam = 3;
  opt.over_weight = 0.7;
  opt.under_weight = 0.3;
  for (const auto& h : beam_search(m, {4, 5, 4}, opt)) {
    CoverageState state(h.coverage.size());
    state.coverage = Tensor({h.coverage.size()}, std::vector<float>(h.coverage.begin(), h.coverage.end()));
    auto [over, under] = coverage_penalties(state);
    EXPECT_NEAR(h.final_score, h.score - 0.7 * over - 0.3 * under, 1e-9);
    double total = 0;
    for (float v : h.coverage) total += v;
    EXPECT_NEAR(total, static_cast<double>(h.tokens.size()), 1e-4);
  }
}

// Ensembles ----------------------------------------------------------------------

TEST(Ensemble, MeanOfDistributions) {
  std::vector<Tensor> d{Tensor::vector({0.2f, 0.5f, 0.3f}), Tensor::vector({0.6f, 0.1f, 0.3f}),
                        Tensor::vector({0.1f, 0.1f, 0.8f})};
  Tensor mean = ensemble_predict(d);
  EXPECT_NEAR(mean[0], 0.3, 1e-6);
  EXPECT_NEAR(mean[1], 0.7 / 3, 1e-6);
  EXPECT_NEAR(mean[2], 1.4 / 3, 1e-6);
  EXPECT_THROW(ensemble_predict(std::vector<Tensor>{}), ShapeError);
  EXPECT_THROW(ensemble_predict(std::vector<Tensor>{Tensor({3}), Tensor({4})}), ShapeError);
}

TEST(Ensemble, CopiesOfOneModelDecodeLikeTheModel) {
  Rng rng(5);
  Seq2Seq m(tiny(Arch::kGru), rng);
  BeamOptions opt;
  opt.beam = 3;
  const Seq2Seq* three[] = {&m, &m, &m};
  auto single = beam_search(m, {4, 5}, opt);
  auto ens = beam_search(three, {4, 5}, opt);
  ASSERT_EQ(single.size(), ens.size());
  for (std::size_t i = 0; i < single.size(); ++i) {
    EXPECT_EQ(single[i].tokens, ens[i].tokens);
    EXPECT_NEAR(single[i].score, ens[i].score, 1e-6);
  }
}

TEST(Ensemble, ExhaustiveBeamMatchesHandAveragedProbabilities) {
  Rng rng(6);
  Seq2Seq a(tiny(Arch::kGru), rng), b(tiny(Arch::kLstm), rng);
  testing::sharpen(a, 3.0f);
  testing::sharpen(b, 3.0f);
  const Seq2Seq* members[] = {&a, &b};
  const std::vector<int> src{5, 4};
  BeamOptions opt;
  opt.beam = 1000;
  opt.max_len = 3;
  auto beam = beam_search(members, src, opt);
  for (const auto& h : beam) EXPECT_NEAR(h.score, testing::ensemble_log_prob(members, src, h.tokens), 1e-6);
  auto brute = testing::brute_force_best(
      testing::all_outputs(6, 3),
      [&](const std::vector<int>& y) { return testing::ensemble_log_prob(members, src, y); }, false);
  EXPECT_NEAR(beam.front().score, brute.score, 1e-6);
}

TEST(Ensemble, RejectsMismatchedVocabularies) {
  Rng rng(7);
  Seq2Seq a(tiny(Arch::kGru, 6), rng), b(tiny(Arch::kGru, 7), rng);
  const Seq2Seq* members[] = {&a, &b};
  EXPECT_THROW(check_ensemble(members), ConfigError);
  EXPECT_THROW(check_ensemble(std::span<const Seq2Seq* const>{}), ConfigError);
}

// Forced scoring and reranking ------------------------------------------------------

TEST(ForceScore, EqualsNegatedSequenceLoss) {
  for (Arch arch : {Arch::kRnn, Arch::kGru, Arch::kSelfAttn}) {
    Rng rng(8);
    Seq2Seq m(tiny(arch), rng);
    const std::vector<int> src{4, 5, 5}, tgt{5, 1, 4};
    ForcedScore f = force_score(m, src, tgt);
    EXPECT_EQ(f.token_log_probs.size(), 4u);
    std::vector<int> wrapped = wrap_target(tgt);
    EXPECT_NEAR(f.total, testing::teacher_forced_log_prob(m, src, wrapped), 1e-4);
    EXPECT_THROW(force_score(m, src, {6}), RangeError);
  }
}

TEST(Rerank, WeightedMeanOfNormalisedScores) {
  RerankScorer len{[](const std::vector<int>&, const std::vector<int>& t) { return -2.0 * t.size(); }, false, 1.0};
  RerankScorer first{[](const std::vector<int>&, const std::vector<int>& t) { return t.empty() ? 0.0 : -t.front(); },
                     true, 3.0};
  std::vector<RerankScorer> scorers{len, first};
  const std::vector<int> cand{4, 5, 6};
  // The right-to-left scorer sees 6 first; length with the end marker is 4.
  const double expected = (1.0 * (-6.0 / 4) + 3.0 * (-6.0 / 4)) / 4.0;
  EXPECT_NEAR(rerank_score({}, cand, scorers), expected, 1e-12);
  EXPECT_THROW(rerank_score({}, cand, {}), ConfigError);
  RerankScorer zero = len;
  zero.weight = 0.0;
  EXPECT_THROW(rerank_score({}, cand, std::vector<RerankScorer>{zero}), ConfigError);
}

TEST(Rerank, OrdersBestFirstAndKeepsTies) {
  RerankScorer s{[](const std::vector<int>&, const std::vector<int>& t) { return -1.0 * t.front() * (t.size() + 1); },
                 false, 1.0};
  std::vector<RerankScorer> scorers{s};
  auto order = rerank({}, {{5}, {4, 9}, {7}, {4}}, scorers);
  EXPECT_EQ(order, (std::vector<std::size_t>{1, 3, 0, 2}));
  EXPECT_THROW(rerank({}, {}, scorers), DataError);
}

TEST(Rerank, ModelScorerUsesForcedScore) {
  Rng rng(9);
  Seq2Seq m(tiny(Arch::kGru), rng);
  RerankScorer fwd = model_scorer(m), bwd = model_scorer(m, true, 2.0);
  const std::vector<int> src{4, 5}, cand{5, 4, 4};
  EXPECT_NEAR(fwd.log_prob(src, cand), force_score(m, src, cand).total, 1e-12);
  std::vector<RerankScorer> both{fwd, bwd};
  const double expected =
      (force_score(m, src, cand).total / 4 + 2.0 * force_score(m, src, {4, 4, 5}).total / 4) / 3.0;
  EXPECT_NEAR(rerank_score(src, cand, both), expected, 1e-12);
}

TEST(Nbest, FormatAndParseRoundTrip) {
  const std::string line = format_nbest(12, "das ist gut", -3.25);
  EXPECT_EQ(line, "12 ||| das ist gut ||| -3.250000");
  NbestEntry e = parse_nbest(line);
  EXPECT_EQ(e.sentence_id, 12u);
  EXPECT_EQ(e.tokens, "das ist gut");
  EXPECT_DOUBLE_EQ(e.score, -3.25);
  EXPECT_THROW(parse_nbest("12 ||| no score"), DataError);
  EXPECT_THROW(parse_nbest("x ||| a ||| 1"), DataError);
  EXPECT_THROW(parse_nbest("1 ||| a ||| 1.5z"), DataError);
}

}  // namespace
}  // namespace nmt
