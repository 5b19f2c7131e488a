// SPDX-License-Identifier: Apache-2.0
#include "nmt/lm.hpp"

#include <cmath>
#include <numeric>

#include "nmt/special.hpp"

namespace nmt {

// Feed-forward model ------------------------------------------------------------

FeedForwardLm::FeedForwardLm(const FflmConfig& config, Rng& rng) : config_(config) {
  if (config.context < 1) throw ConfigError("language model context length must be at least 1");
  if (config.vocab == 0) throw ConfigError("language model vocabulary is empty");
  embedding_ = make_embedding(params_, "C", config.vocab, config.embed, rng);
  for (std::size_t j = 0; j < config.context; ++j) {
    h_.push_back(&params_.add("H" + std::to_string(j), init_weights({config.hidden, config.embed}, InitKind::kHidden, rng)));
  }
  b_h_ = &params_.add("b_h", init_weights({config.hidden}, InitKind::kBias, rng));
  w_ = &params_.add("W", init_weights({config.vocab, config.hidden}, InitKind::kOutput, rng));
  b_ = &params_.add("b", init_weights({config.vocab}, InitKind::kBias, rng));
  if (config.direct) {
    for (std::size_t j = 0; j < config.context; ++j) {
      u_.push_back(&params_.add("U" + std::to_string(j), init_weights({config.vocab, config.embed}, InitKind::kOutput, rng)));
    }
  }
}

Expr FeedForwardLm::scores(Tape& tape, const std::vector<std::vector<int>>& contexts) const {
  if (contexts.empty()) throw ShapeError("no contexts given");
  const std::size_t n = config_.context;
  std::vector<Expr> hidden_terms;
  std::vector<Expr> direct_terms;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<int> ids;
    for (const auto& c : contexts) {
      if (c.size() != n) {
        throw ShapeError("context has " + std::to_string(c.size()) + " ids, model expects " + std::to_string(n));
      }
      ids.push_back(c[j]);
    }
    Expr e = embed(tape, embedding_, ids);
    hidden_terms.push_back(linear(e, tape.parameter(*h_[j])));
    if (config_.direct) direct_terms.push_back(linear(e, tape.parameter(*u_[j])));
  }
  Expr h = tanh(add(add_n(hidden_terms), tape.parameter(*b_h_)));
  Expr s = linear(h, tape.parameter(*w_), tape.parameter(*b_));
  if (config_.direct) s = add(s, add_n(direct_terms));
  return s;
}

Expr fflm_forward(Tape& tape, const FeedForwardLm& model, const std::vector<int>& context) {
  return row(softmax(model.scores(tape, {context})), 0);
}

std::vector<double> log_partition(const Tensor& scores) {
  Tensor lse = log_sum_exp(scores);
  return {lse.begin(), lse.end()};
}

double mean_abs_log_z(const FeedForwardLm& model, const std::vector<std::vector<int>>& contexts) {
  if (contexts.empty()) throw ShapeError("no contexts given");
  Tape tape;
  auto z = log_partition(model.scores(tape, contexts).value());
  double acc = 0.0;
  for (double v : z) acc += std::fabs(v);
  return acc / static_cast<double>(z.size());
}

// Objectives ----------------------------------------------------------------------

Expr lm_likelihood_loss(Expr p, int id) { return nll_loss(p, id); }

Expr selfnorm_loss(Expr scores, const std::vector<int>& ids, float alpha) {
  Expr lse = log_sum_exp(scores);
  Expr nll = sub(sum(lse), sum(pick(scores, ids)));
  if (alpha == 0.0f) return nll;
  return add(nll, scale(sum(square(lse)), alpha));
}

Expr nce_loss(Expr scores, const std::vector<float>& noise_prob, bool is_true) {
  if (noise_prob.size() != scores.value().size()) throw ShapeError("nce_loss: one noise probability per score");
  Tensor log_pn(scores.value().shape());
  for (std::size_t i = 0; i < noise_prob.size(); ++i) {
    if (!(noise_prob[i] > 0.0f)) throw std::invalid_argument("nce_loss: noise probability must be positive");
    log_pn[i] = std::log(noise_prob[i]);
  }
  Expr margin = sub(scores, scores.tape().constant(log_pn));
  if (!is_true) margin = scale(margin, -1.0f);
  return scale(sum(log_sigmoid(margin)), -1.0f);
}

std::vector<float> unigram_noise(const std::vector<std::vector<int>>& corpus, std::size_t vocab) {
  std::vector<double> counts(vocab, 1.0);
  for (const auto& s : corpus) {
    for (int id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab) throw RangeError("unigram_noise: id out of range");
      counts[id] += 1.0;
    }
  }
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<float> p(vocab);
  for (std::size_t i = 0; i < vocab; ++i) p[i] = static_cast<float>(counts[i] / total);
  return p;
}

Expr nce_objective(Tape& tape, const FeedForwardLm& model, const std::vector<std::vector<int>>& contexts,
                   const std::vector<int>& targets, const NceConfig& config, Rng& rng) {
  if (contexts.size() != targets.size()) throw ShapeError("nce_objective: one target per context");
  if (config.noise.size() != model.config().vocab) throw ShapeError("nce_objective: noise distribution size");
  if (config.noise_ratio == 0) throw ConfigError("nce noise ratio must be at least 1");
  Expr s = model.scores(tape, contexts);
  const float batch = static_cast<float>(contexts.size());

  std::vector<float> pn_true;
  for (int t : targets) pn_true.push_back(config.noise[t]);
  Expr true_term = scale(nce_loss(pick(s, targets), pn_true, true), 1.0f / (2.0f * batch));

  std::discrete_distribution<int> draw(config.noise.begin(), config.noise.end());
  std::vector<Expr> noise_terms;
  for (std::size_t k = 0; k < config.noise_ratio; ++k) {
    std::vector<int> ids;
    std::vector<float> pn;
    for (std::size_t b = 0; b < contexts.size(); ++b) {
      ids.push_back(draw(rng));
      pn.push_back(config.noise[ids.back()]);
    }
    noise_terms.push_back(nce_loss(pick(s, ids), pn, false));
  }
  const float noise_count = batch * static_cast<float>(config.noise_ratio);
  return add(true_term, scale(add_n(noise_terms), 1.0f / (2.0f * noise_count)));
}

void ngram_examples(const std::vector<int>& sentence, std::size_t context,
                    std::vector<std::vector<int>>& contexts, std::vector<int>& targets) {
  std::vector<int> padded(context, kBosId);
  padded.insert(padded.end(), sentence.begin(), sentence.end());
  padded.push_back(kEosId);
  for (std::size_t t = context; t < padded.size(); ++t) {
    contexts.emplace_back(padded.begin() + static_cast<std::ptrdiff_t>(t - context),
                          padded.begin() + static_cast<std::ptrdiff_t>(t));
    targets.push_back(padded[t]);
  }
}

// Recurrent model ------------------------------------------------------------------

RecurrentLm::RecurrentLm(const RnnLmConfig& config, Rng& rng) : config_(config) {
  if (config.vocab == 0) throw ConfigError("language model vocabulary is empty");
  embedding_ = make_embedding(params_, "emb", config.vocab, config.embed, rng);
  stack_ = RecurrentStack(params_, "rnn", config.cell, config.mode, config.depth, config.embed, config.hidden, rng);
  w_ = &params_.add("out.W", init_weights({config.vocab, config.hidden}, InitKind::kOutput, rng));
  b_ = &params_.add("out.b", init_weights({config.vocab}, InitKind::kBias, rng));
}

Expr RecurrentLm::forward(Tape& tape, const std::vector<int>& sentence, std::size_t truncate) const {
  if (sentence.size() < 2) throw ShapeError("recurrent LM needs at least a start marker and one token");
  auto state = stack_.zero_state(tape, 1);
  std::vector<Expr> rows;
  for (std::size_t t = 0; t + 1 < sentence.size(); ++t) {
    if (truncate > 0 && t > 0 && t % truncate == 0) {
      for (auto& layer : state) {
        layer.h = stop_gradient(layer.h);
        if (layer.m.valid()) layer.m = stop_gradient(layer.m);
      }
    }
    state = stack_.step(tape, embed(tape, embedding_, std::vector<int>{sentence[t]}), state);
    rows.push_back(softmax(linear(RecurrentStack::top(state).h, tape.parameter(*w_), tape.parameter(*b_))));
  }
  return stack_rows(rows);
}

Expr RecurrentLm::loss(Tape& tape, const std::vector<int>& sentence, std::size_t truncate) const {
  Expr p = forward(tape, sentence, truncate);
  std::vector<int> targets(sentence.begin() + 1, sentence.end());
  return nll_rows(p, targets, std::vector<float>(targets.size(), 1.0f));
}

Expr rnnlm_forward(Tape& tape, const RecurrentLm& model, const std::vector<int>& sentence, std::size_t truncate) {
  if (sentence.empty()) throw ShapeError("empty sentence");
  return model.forward(tape, sentence, truncate);
}

// Evaluation --------------------------------------------------------------------------

double perplexity(const std::vector<std::vector<int>>& corpus, const SentenceNll& nll) {
  if (corpus.empty()) throw ShapeError("perplexity of an empty corpus");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    total += nll(s);
    tokens += s.size() + 1;
  }
  return std::exp(total / static_cast<double>(tokens));
}

double sentence_nll(const RecurrentLm& model, const std::vector<int>& words) {
  std::vector<int> s{kBosId};
  s.insert(s.end(), words.begin(), words.end());
  s.push_back(kEosId);
  Tape tape;
  return model.loss(tape, s).value().item();
}

double sentence_nll(const FeedForwardLm& model, const std::vector<int>& words) {
  std::vector<std::vector<int>> contexts;
  std::vector<int> targets;
  ngram_examples(words, model.config().context, contexts, targets);
  Tape tape;
  Expr p = softmax(model.scores(tape, contexts));
  return nll_rows(p, targets, std::vector<float>(targets.size(), 1.0f)).value().item();
}

}  // namespace nmt
