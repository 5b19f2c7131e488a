// SPDX-License-Identifier: Apache-2.0
//
// Inference: beam search, greedy decoding, ensembles, forced decoding and
// n-best reranking.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nmt/seq2seq.hpp"

namespace nmt {

struct BeamOptions {
  std::size_t beam = 5;
  /// Divide final scores by the output length, end marker included.
  bool normalize = false;
  /// Output length limit is factor·|source| + 5 ...
  double max_len_factor = 2.0;
  /// ... unless this is positive.
  std::size_t max_len = 0;
  /// Weights of the over- and under-generation penalties.
  double over_weight = 0.0;
  double under_weight = 0.0;
  /// Apply coverage penalties while pruning, not only in the final ranking.
  bool coverage_in_search = false;
};

struct Hypothesis {
  /// Output ids; complete hypotheses end with the end marker.
  std::vector<int> tokens;
  /// Σ log t_i[y_i]
  double score = 0.0;
  /// Ranking score after normalisation and penalties.
  double final_score = 0.0;
  bool complete = false;
  /// No hypothesis finished within the length limit; this is the best partial.
  bool truncated = false;
  /// Attention row per output position (averaged over ensemble members).
  std::vector<std::vector<float>> alignment;
  /// Accumulated coverage per source position.
  std::vector<float> coverage;
};

/// Checks that all members share the target vocabulary size. Throws ConfigError.
void check_ensemble(std::span<const Seq2Seq* const> models);

/// Arithmetic mean of per-model distributions.
Tensor ensemble_predict(std::span<const Tensor> distributions);

std::size_t max_output_length(std::size_t source_words, const BeamOptions& options);

/// n-best list sorted by final score. Ties among expansions go to the lower
/// token id, then the lower parent index.
std::vector<Hypothesis> beam_search(std::span<const Seq2Seq* const> models, const std::vector<int>& source,
                                    const BeamOptions& options);
std::vector<Hypothesis> beam_search(const Seq2Seq& model, const std::vector<int>& source, const BeamOptions& options);

/// Repeated argmax (lowest id on ties) until the end marker or the length limit.
Hypothesis greedy(std::span<const Seq2Seq* const> models, const std::vector<int>& source, const BeamOptions& options);

struct ForcedScore {
  std::vector<double> token_log_probs;
  double total = 0.0;
};

/// Log-probabilities of `target` followed by the end marker.
ForcedScore force_score(const Seq2Seq& model, const std::vector<int>& source, const std::vector<int>& target);

struct RerankScorer {
  /// Total log-probability of a target (end marker included) given a source.
  std::function<double(const std::vector<int>& source, const std::vector<int>& target)> log_prob;
  /// Scores the reversed target.
  bool right_to_left = false;
  double weight = 1.0;
};

RerankScorer model_scorer(const Seq2Seq& model, bool right_to_left = false, double weight = 1.0);

/// Weighted mean over scorers of length-normalised log-probabilities.
double rerank_score(const std::vector<int>& source, const std::vector<int>& candidate,
                    std::span<const RerankScorer> scorers);

/// Candidate indices ordered best first; equal scores keep their original order.
std::vector<std::size_t> rerank(const std::vector<int>& source, const std::vector<std::vector<int>>& candidates,
                                std::span<const RerankScorer> scorers);

/// "id ||| tokens ||| score"
std::string format_nbest(std::size_t sentence_id, std::string_view tokens, double score);

struct NbestEntry {
  std::size_t sentence_id = 0;
  std::string tokens;
  double score = 0.0;
};

NbestEntry parse_nbest(std::string_view line);

}  // namespace nmt
