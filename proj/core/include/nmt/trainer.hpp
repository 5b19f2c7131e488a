// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training loop for the translation model with validation,
// early stopping and periodic checkpoint hooks.
#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "nmt/data.hpp"
#include "nmt/optim.hpp"
#include "nmt/seq2seq.hpp"

namespace nmt {

struct TrainerOptions {
  TrainPlan plan;
  OptimizerConfig optimizer;
  /// Validations without improvement before stopping; 0 disables early stopping.
  std::size_t patience = 5;
  /// Updates between checkpoint hooks; 0 fires only at epoch ends.
  std::size_t checkpoint_every = 0;
  /// Divide batch gradients by the sentence count; otherwise apply their sum.
  bool average = true;
  float align_weight = 0.0f;
  AlignCost align_cost = AlignCost::kCrossEntropy;
};

struct Evaluation {
  /// Σ −log t_i[y_i] over all target tokens (end markers included).
  double nll = 0.0;
  std::size_t tokens = 0;
  std::size_t sentences = 0;

  double per_token() const { return tokens ? nll / static_cast<double>(tokens) : 0.0; }
  double perplexity() const;
};

struct TrainSummary {
  std::size_t epochs = 0;
  std::size_t updates = 0;
  std::vector<double> train_loss;  ///< mean loss per sentence, one entry per epoch
  std::vector<double> valid_loss;  ///< per-token validation loss, one entry per validation
  bool stopped_early = false;
};

class Trainer {
 public:
  enum class Event { kPeriodic, kEpoch, kBest };
  using CheckpointHook = std::function<void(Event event, std::size_t epoch, std::size_t updates)>;

  /// `log` receives tab-separated progress lines; may be null.
  Trainer(Seq2Seq& model, TrainerOptions options, std::ostream* log = nullptr);

  void on_checkpoint(CheckpointHook hook) { hook_ = std::move(hook); }
  Optimizer& optimizer() { return optimizer_; }
  std::size_t updates() const { return updates_; }

  /// One update on the batch; returns the summed sentence loss (λ-weighted alignment included).
  double step(const Batch& batch, Rng& rng);

  /// Teacher-forced negative log-likelihood without updates.
  Evaluation evaluate(const std::vector<SentencePair>& pairs, std::size_t batch_size = 32) const;

  /// Wrapped pairs are produced internally from plain-id pairs.
  TrainSummary fit(const std::vector<SentencePair>& train, const std::vector<SentencePair>& valid = {});

 private:
  void validate(std::size_t epoch, const std::vector<SentencePair>& valid, TrainSummary& summary);

  Seq2Seq& model_;
  TrainerOptions options_;
  std::ostream* log_;
  Optimizer optimizer_;
  CheckpointHook hook_;
  std::size_t updates_ = 0;
  std::optional<double> best_;
};

/// Adds sentence markers to every pair.
std::vector<SentencePair> wrap_pairs(const std::vector<SentencePair>& pairs);

}  // namespace nmt
