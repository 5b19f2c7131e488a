// SPDX-License-Identifier: Apache-2.0
#include "nmt/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "nmt/errors.hpp"

namespace nmt {
namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double Evaluation::perplexity() const { return std::exp(per_token()); }

std::vector<SentencePair> wrap_pairs(const std::vector<SentencePair>& pairs) {
  std::vector<SentencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({wrap_source(p.source), wrap_target(p.target), p.alignment});
  return out;
}

Trainer::Trainer(Seq2Seq& model, TrainerOptions options, std::ostream* log)
    : model_(model), options_(options), log_(log), optimizer_(options.optimizer, model.params()) {}

double Trainer::step(const Batch& batch, Rng& rng) {
  Tape tape;
  LossOptions lo;
  lo.align_weight = options_.align_weight;
  lo.align_cost = options_.align_cost;
  lo.training = true;
  lo.rng = &rng;
  SequenceLoss loss = model_.sequence_loss(tape, batch, lo);
  const double total = loss.total.value().item();
  tape.backward(options_.average ? scale(loss.total, 1.0f / static_cast<float>(batch.size)) : loss.total);
  Gradients grads(model_.params());
  tape.accumulate(grads);
  optimizer_.apply(model_.params(), grads);
  ++updates_;
  return total;
}

Evaluation Trainer::evaluate(const std::vector<SentencePair>& pairs, std::size_t batch_size) const {
  Evaluation ev;
  const auto wrapped = wrap_pairs(pairs);
  std::vector<std::size_t> idx(wrapped.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - start);
    Batch batch = make_batch(wrapped, std::span<const std::size_t>(idx).subspan(start, n));
    Tape tape;
    SequenceLoss loss = model_.sequence_loss(tape, batch);
    ev.nll += loss.nll.value().item();
    ev.tokens += loss.tokens;
    ev.sentences += n;
  }
  return ev;
}

void Trainer::validate(std::size_t epoch, const std::vector<SentencePair>& valid, TrainSummary& summary) {
  const Evaluation ev = evaluate(valid);
  summary.valid_loss.push_back(ev.per_token());
  if (log_) {
    *log_ << "valid\t" << epoch << '\t' << updates_ << '\t' << fixed(ev.per_token()) << '\t' << fixed(ev.perplexity())
          << '\n';
  }
  if (!best_ || ev.per_token() < *best_) {
    best_ = ev.per_token();
    if (hook_) hook_(Event::kBest, epoch, updates_);
  }
  if (options_.patience > 0 && should_stop(summary.valid_loss, options_.patience)) summary.stopped_early = true;
}

TrainSummary Trainer::fit(const std::vector<SentencePair>& train, const std::vector<SentencePair>& valid) {
  TrainSummary summary;
  if (options_.plan.epochs > 0 && train.empty()) throw DataError("no training pairs");
  const auto wrapped = wrap_pairs(train);
  Rng rng(options_.plan.seed);
  for (std::size_t epoch = 1; epoch <= options_.plan.epochs && !summary.stopped_early; ++epoch) {
    double total = 0.0;
    std::size_t sentences = 0;
    for (const Batch& batch : make_batches(wrapped, options_.plan, rng)) {
      total += step(batch, rng);
      sentences += batch.size;
      if (options_.checkpoint_every > 0 && updates_ % options_.checkpoint_every == 0 && hook_) {
        hook_(Event::kPeriodic, epoch, updates_);
      }
      if (options_.plan.validate_every > 0 && updates_ % options_.plan.validate_every == 0 && !valid.empty()) {
        validate(epoch, valid, summary);
        if (summary.stopped_early) break;
      }
    }
    const double mean = sentences ? total / static_cast<double>(sentences) : 0.0;
    summary.train_loss.push_back(mean);
    summary.epochs = epoch;
    if (log_) *log_ << "train\t" << epoch << '\t' << updates_ << '\t' << fixed(mean) << '\n';
    if (options_.plan.validate_every == 0 && !valid.empty()) validate(epoch, valid, summary);
    if (hook_) hook_(Event::kEpoch, epoch, updates_);
  }
  summary.updates = updates_;
  return summary;
}

}  // namespace nmt
