// SPDX-License-Identifier: Apache-2.0
//
// Feed-forward n-gram and recurrent language models, with likelihood,
// self-normalising and noise-contrastive objectives.
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "nmt/graph.hpp"
#include "nmt/layers.hpp"

namespace nmt {

// Feed-forward model ------------------------------------------------------------

struct FflmConfig {
  std::size_t context = 2;  ///< n − 1
  std::size_t embed = 16;
  std::size_t hidden = 32;
  std::size_t vocab = 0;
  bool direct = false;
};

/// s = W·tanh(b_h + Σ_j H_j C(w_j)) + b [+ Σ_j U_j C(w_j)], p = softmax(s).
class FeedForwardLm {
 public:
  FeedForwardLm(const FflmConfig& config, Rng& rng);

  const FflmConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Raw scores [B×V] for a batch of contexts, each exactly n − 1 ids.
  Expr scores(Tape& tape, const std::vector<std::vector<int>>& contexts) const;

 private:
  FflmConfig config_;
  ParameterSet params_;
  Embedding embedding_;
  std::vector<const Parameter*> h_;
  std::vector<const Parameter*> u_;
  const Parameter* b_h_ = nullptr;
  const Parameter* w_ = nullptr;
  const Parameter* b_ = nullptr;
};

/// Distribution over the vocabulary [V] for one context.
Expr fflm_forward(Tape& tape, const FeedForwardLm& model, const std::vector<int>& context);

/// log Σ_j exp(s_j) of each row of raw scores, in plain numbers.
std::vector<double> log_partition(const Tensor& scores);

/// Mean |log Z(x)| over the given contexts.
double mean_abs_log_z(const FeedForwardLm& model, const std::vector<std::vector<int>>& contexts);

// Objectives ----------------------------------------------------------------------

/// −log p[id]
Expr lm_likelihood_loss(Expr p, int id);

/// Σ_b −log softmax(s_b)[id_b] + α·(log Σ_j e^{s_bj})² over rows of raw scores.
Expr selfnorm_loss(Expr scores, const std::vector<int>& ids, float alpha);

/// Per-example noise-contrastive terms for unnormalised model scores s (p_m = e^s):
/// p(correct) = p_m/(p_m + p_n) = σ(s − log p_n). Returns Σ −log p(correct) for
/// true examples, Σ −log(1 − p(correct)) for noise samples.
Expr nce_loss(Expr scores, const std::vector<float>& noise_prob, bool is_true);

struct NceConfig {
  /// Noise samples per true example.
  std::size_t noise_ratio = 1;
  /// Unigram noise distribution over the vocabulary, sums to 1.
  std::vector<float> noise;
};

/// Add-one smoothed unigram distribution over ids [0, vocab).
std::vector<float> unigram_noise(const std::vector<std::vector<int>>& corpus, std::size_t vocab);

/// Batch objective 1/(2|U_t|) Σ_true −log p(correct) + 1/(2|U_n|) Σ_noise −log(1 − p(correct)).
/// Noise ids are drawn from `config.noise` for every context.
Expr nce_objective(Tape& tape, const FeedForwardLm& model, const std::vector<std::vector<int>>& contexts,
                   const std::vector<int>& targets, const NceConfig& config, Rng& rng);

/// Sliding n-gram contexts and targets over BOS^(n−1) w_1 … w_k EOS.
void ngram_examples(const std::vector<int>& sentence, std::size_t context,
                    std::vector<std::vector<int>>& contexts, std::vector<int>& targets);

// Recurrent model ------------------------------------------------------------------

struct RnnLmConfig {
  std::size_t vocab = 0;
  std::size_t embed = 16;
  std::size_t hidden = 32;
  std::size_t depth = 1;
  CellKind cell = CellKind::kRnn;
  DeepMode mode = DeepMode::kStacked;
};

class RecurrentLm {
 public:
  RecurrentLm(const RnnLmConfig& config, Rng& rng);

  const RnnLmConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Distributions [T−1 × V]; row t predicts sentence[t+1] from sentence[0..t].
  /// `truncate` = k > 0 cuts gradient flow through the hidden state every k steps.
  Expr forward(Tape& tape, const std::vector<int>& sentence, std::size_t truncate = 0) const;
  /// Σ_t −log p(sentence[t+1] | prefix)
  Expr loss(Tape& tape, const std::vector<int>& sentence, std::size_t truncate = 0) const;

 private:
  RnnLmConfig config_;
  ParameterSet params_;
  Embedding embedding_;
  RecurrentStack stack_;
  const Parameter* w_ = nullptr;
  const Parameter* b_ = nullptr;
};

/// rnnlm_forward in free-function form; the sentence must start with BOS.
Expr rnnlm_forward(Tape& tape, const RecurrentLm& model, const std::vector<int>& sentence,
                   std::size_t truncate = 0);

// Evaluation --------------------------------------------------------------------------

/// Total negative log-likelihood of BOS w_1 … w_k EOS given the plain words.
using SentenceNll = std::function<double(const std::vector<int>& words)>;

/// exp of the mean per-token NLL; the end-of-sentence token counts as a token.
double perplexity(const std::vector<std::vector<int>>& corpus, const SentenceNll& nll);

double sentence_nll(const RecurrentLm& model, const std::vector<int>& words);
double sentence_nll(const FeedForwardLm& model, const std::vector<int>& words);

}  // namespace nmt
