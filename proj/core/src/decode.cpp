// SPDX-License-Identifier: Apache-2.0
#include "nmt/decode.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <string>

#include "nmt/errors.hpp"
#include "nmt/special.hpp"

namespace nmt {
namespace {

double log_prob(float p) { return std::log(static_cast<double>(std::max(p, kProbabilityFloor))); }

bool searchable(int token) { return token != kPadId && token != kBosId; }

std::pair<double, double> penalties(const std::vector<float>& coverage) {
  double over = 0.0;
  double under = 0.0;
  for (float c : coverage) {
    over += std::max(0.0, static_cast<double>(c) - 1.0);
    under += std::max(0.0, 1.0 - static_cast<double>(c));
  }
  return {over, under};
}

double penalty_term(const std::vector<float>& coverage, const BeamOptions& options) {
  if (options.over_weight == 0.0 && options.under_weight == 0.0) return 0.0;
  auto [over, under] = penalties(coverage);
  return options.over_weight * over + options.under_weight * under;
}

/// Sessions for every ensemble member over one source sentence.
class EnsembleSession {
 public:
  EnsembleSession(std::span<const Seq2Seq* const> models, const std::vector<int>& source) {
    check_ensemble(models);
    if (source.empty()) throw DataError("cannot decode an empty source sentence");
    for (const Seq2Seq* m : models) sessions_.push_back(std::make_unique<DecodeSession>(*m, source));
  }

  std::vector<DecoderState> initial() {
    std::vector<DecoderState> states;
    for (auto& s : sessions_) states.push_back(s->initial());
    return states;
  }

  struct Step {
    Tensor probs;
    std::vector<float> alpha;
    std::vector<float> coverage;
    std::vector<DecoderState> next;
  };

  Step step(const std::vector<DecoderState>& states, int prev) {
    Step out;
    std::vector<Tensor> dists;
    const std::size_t k = sessions_.size();
    const std::size_t positions = sessions_.front()->positions();
    std::vector<double> alpha(positions, 0.0);
    std::vector<double> coverage(positions, 0.0);
    bool has_alpha = false;
    for (std::size_t m = 0; m < k; ++m) {
      StepResult r = sessions_[m]->step(states[m], prev);
      dists.push_back(std::move(r.probs));
      if (!r.alpha.empty()) {
        has_alpha = true;
        for (std::size_t j = 0; j < positions; ++j) alpha[j] += r.alpha[j];
      }
      for (std::size_t j = 0; j < positions; ++j) coverage[j] += r.next.coverage[j];
      out.next.push_back(std::move(r.next));
    }
    out.probs = ensemble_predict(dists);
    if (has_alpha) {
      for (double a : alpha) out.alpha.push_back(static_cast<float>(a / static_cast<double>(k)));
    }
    for (double c : coverage) out.coverage.push_back(static_cast<float>(c / static_cast<double>(k)));
    return out;
  }

  std::size_t source_words() const { return sessions_.front()->source_words(); }
  std::size_t positions() const { return sessions_.front()->positions(); }

 private:
  std::vector<std::unique_ptr<DecodeSession>> sessions_;
};

/// Search-tree node; hypotheses are recovered by walking parents.
struct Node {
  std::size_t parent;
  int token;
  std::vector<float> alpha;
};

constexpr std::size_t kRoot = static_cast<std::size_t>(-1);

struct Live {
  std::size_t node = kRoot;
  double score = 0.0;
  int last = kBosId;
  std::vector<DecoderState> states;
  std::vector<float> coverage;
};

struct Candidate {
  double key;
  double score;
  int token;
  std::size_t parent;
};

Hypothesis finish(const std::vector<Node>& tree, const Live& live, bool complete, const BeamOptions& options) {
  Hypothesis h;
  for (std::size_t n = live.node; n != kRoot; n = tree[n].parent) {
    h.tokens.push_back(tree[n].token);
    if (!tree[n].alpha.empty()) h.alignment.push_back(tree[n].alpha);
  }
  std::reverse(h.tokens.begin(), h.tokens.end());
  std::reverse(h.alignment.begin(), h.alignment.end());
  h.score = live.score;
  h.complete = complete;
  h.truncated = !complete;
  h.coverage = live.coverage;
  double ranked = h.score;
  if (options.normalize && !h.tokens.empty()) ranked /= static_cast<double>(h.tokens.size());
  h.final_score = ranked - penalty_term(h.coverage, options);
  return h;
}

}  // namespace

void check_ensemble(std::span<const Seq2Seq* const> models) {
  if (models.empty()) throw ConfigError("an ensemble needs at least one model");
  const std::size_t v = models.front()->config().tgt_vocab;
  const std::size_t sv = models.front()->config().src_vocab;
  for (const Seq2Seq* m : models) {
    if (m->config().tgt_vocab != v || m->config().src_vocab != sv) {
      throw ConfigError("ensemble members disagree on vocabulary sizes");
    }
  }
}

Tensor ensemble_predict(std::span<const Tensor> distributions) {
  if (distributions.empty()) throw ShapeError("no distributions to average");
  const Tensor& first = distributions.front();
  std::vector<double> acc(first.size(), 0.0);
  for (const Tensor& d : distributions) {
    if (d.shape() != first.shape()) throw ShapeError("ensemble distributions differ in vocabulary size");
    for (std::size_t i = 0; i < d.size(); ++i) acc[i] += d[i];
  }
  Tensor out(first.shape());
  const double k = static_cast<double>(distributions.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / k);
  return out;
}

std::size_t max_output_length(std::size_t source_words, const BeamOptions& options) {
  if (options.max_len > 0) return options.max_len;
  return static_cast<std::size_t>(std::floor(options.max_len_factor * static_cast<double>(source_words))) + 5;
}

std::vector<Hypothesis> beam_search(std::span<const Seq2Seq* const> models, const std::vector<int>& source,
                                    const BeamOptions& options) {
  if (options.beam == 0) throw ConfigError("beam size must be at least 1");
  EnsembleSession session(models, source);
  const std::size_t limit = max_output_length(session.source_words(), options);
  const std::size_t vocab = models.front()->config().tgt_vocab;

  std::vector<Node> tree;
  std::vector<Live> live(1);
  live[0].states = session.initial();
  live[0].coverage.assign(session.positions(), 0.0f);
  std::vector<Live> completed;

  for (std::size_t t = 0; t < limit && !live.empty(); ++t) {
    std::vector<EnsembleSession::Step> steps;
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * vocab);
    for (std::size_t p = 0; p < live.size(); ++p) {
      steps.push_back(session.step(live[p].states, live[p].last));
      const auto& st = steps.back();
      const double penalty = options.coverage_in_search ? penalty_term(st.coverage, options) : 0.0;
      for (std::size_t k = 0; k < vocab; ++k) {
        const int token = static_cast<int>(k);
        if (!searchable(token)) continue;
        const double score = live[p].score + log_prob(st.probs[k]);
        candidates.push_back({score - penalty, score, token, p});
      }
    }
    const std::size_t keep = std::min(options.beam - completed.size(), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.key != b.key) return a.key > b.key;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Live> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      auto& st = steps[cand.parent];
      tree.push_back({live[cand.parent].node, cand.token, st.alpha});
      Live h;
      h.node = tree.size() - 1;
      h.score = cand.score;
      h.last = cand.token;
      h.states = st.next;
      h.coverage = st.coverage;
      if (cand.token == kEosId) {
        completed.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  std::vector<Hypothesis> out;
  for (const Live& h : completed) out.push_back(finish(tree, h, true, options));
  if (out.empty()) {
    const auto best = std::max_element(live.begin(), live.end(),
                                       [](const Live& a, const Live& b) { return a.score < b.score; });
    if (best != live.end()) out.push_back(finish(tree, *best, false, options));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.final_score > b.final_score; });
  return out;
}

std::vector<Hypothesis> beam_search(const Seq2Seq& model, const std::vector<int>& source, const BeamOptions& options) {
  const Seq2Seq* members[] = {&model};
  return beam_search(std::span<const Seq2Seq* const>(members), source, options);
}

Hypothesis greedy(std::span<const Seq2Seq* const> models, const std::vector<int>& source, const BeamOptions& options) {
  EnsembleSession session(models, source);
  const std::size_t limit = max_output_length(session.source_words(), options);
  Hypothesis h;
  std::vector<DecoderState> states = session.initial();
  h.coverage.assign(session.positions(), 0.0f);
  int prev = kBosId;
  while (h.tokens.size() < limit) {
    auto st = session.step(states, prev);
    int best = -1;
    for (std::size_t k = 0; k < st.probs.size(); ++k) {
      const int token = static_cast<int>(k);
      if (!searchable(token)) continue;
      if (best < 0 || st.probs[k] > st.probs[static_cast<std::size_t>(best)]) best = token;
    }
    h.score += log_prob(st.probs[static_cast<std::size_t>(best)]);
    h.tokens.push_back(best);
    if (!st.alpha.empty()) h.alignment.push_back(st.alpha);
    h.coverage = st.coverage;
    states = std::move(st.next);
    prev = best;
    if (best == kEosId) {
      h.complete = true;
      break;
    }
  }
  h.truncated = !h.complete;
  h.final_score = h.score;
  if (options.normalize && !h.tokens.empty()) h.final_score /= static_cast<double>(h.tokens.size());
  h.final_score -= penalty_term(h.coverage, options);
  return h;
}

ForcedScore force_score(const Seq2Seq& model, const std::vector<int>& source, const std::vector<int>& target) {
  const std::size_t vocab = model.config().tgt_vocab;
  for (int y : target) {
    if (y < 0 || static_cast<std::size_t>(y) >= vocab) {
      throw RangeError("target id " + std::to_string(y) + " outside the target vocabulary");
    }
  }
  DecodeSession session(model, source);
  DecoderState state = session.initial();
  ForcedScore out;
  int prev = kBosId;
  std::vector<int> outputs = wrap_target(target);
  for (int y : outputs) {
    StepResult r = session.step(state, prev);
    const double lp = log_prob(r.probs[static_cast<std::size_t>(y)]);
    out.token_log_probs.push_back(lp);
    out.total += lp;
    state = std::move(r.next);
    prev = y;
  }
  return out;
}

RerankScorer model_scorer(const Seq2Seq& model, bool right_to_left, double weight) {
  RerankScorer s;
  s.log_prob = [&model](const std::vector<int>& source, const std::vector<int>& target) {
    return force_score(model, source, target).total;
  };
  s.right_to_left = right_to_left;
  s.weight = weight;
  return s;
}

double rerank_score(const std::vector<int>& source, const std::vector<int>& candidate,
                    std::span<const RerankScorer> scorers) {
  if (scorers.empty()) throw ConfigError("reranking needs at least one scorer");
  double weighted = 0.0;
  double total_weight = 0.0;
  const double length = static_cast<double>(candidate.size() + 1);
  for (const RerankScorer& s : scorers) {
    std::vector<int> target = candidate;
    if (s.right_to_left) std::reverse(target.begin(), target.end());
    weighted += s.weight * s.log_prob(source, target) / length;
    total_weight += s.weight;
  }
  if (total_weight <= 0.0) throw ConfigError("reranking weights must sum to a positive value");
  return weighted / total_weight;
}

std::vector<std::size_t> rerank(const std::vector<int>& source, const std::vector<std::vector<int>>& candidates,
                                std::span<const RerankScorer> scorers) {
  if (candidates.empty()) throw DataError("cannot rerank an empty n-best list");
  std::vector<double> scores;
  for (const auto& c : candidates) scores.push_back(rerank_score(source, c, scorers));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::string format_nbest(std::size_t sentence_id, std::string_view tokens, double score) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", score);
  std::string out = std::to_string(sentence_id);
  out += " ||| ";
  out += tokens;
  out += " ||| ";
  out += buf;
  return out;
}

NbestEntry parse_nbest(std::string_view line) {
  constexpr std::string_view sep = " ||| ";
  const auto a = line.find(sep);
  const auto b = a == std::string_view::npos ? a : line.find(sep, a + sep.size());
  if (b == std::string_view::npos) throw DataError("malformed n-best line: " + std::string(line));
  NbestEntry e;
  const auto id = line.substr(0, a);
  if (std::from_chars(id.data(), id.data() + id.size(), e.sentence_id).ec != std::errc{}) {
    throw DataError("malformed n-best sentence id: " + std::string(id));
  }
  e.tokens = std::string(line.substr(a + sep.size(), b - a - sep.size()));
  const std::string score(line.substr(b + sep.size()));
  try {
    std::size_t used = 0;
    e.score = std::stod(score, &used);
    if (used != score.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw DataError("malformed n-best score: " + score);
  }
  return e;
}

}  // namespace nmt
