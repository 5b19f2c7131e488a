// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nmt/trainer.hpp"

namespace nmt {
namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.arch = Arch::kGru;
  c.src_vocab = 8;
  c.tgt_vocab = 8;
  c.embed = 4;
  c.hidden = 5;
  c.attention = 4;
  return c;
}

std::vector<SentencePair> copy_pairs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> tok(4, 7), len(1, 4);
  std::vector<SentencePair> out(n);
  for (auto& p : out) {
    for (int k = len(rng); k > 0; --k) p.source.push_back(tok(rng));
    p.target = p.source;
  }
  return out;
}

std::vector<Tensor> snapshot(const Seq2Seq& m) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < m.params().size(); ++i) out.push_back(m.params()[i].value);
  return out;
}

TrainerOptions sgd(float lr) {
  TrainerOptions o;
  o.optimizer = OptimizerConfig::defaults(OptimizerKind::kSgd);
  o.optimizer.learning_rate = lr;
  o.optimizer.clip = 0.0f;
  o.plan.mini_batch = 4;
  o.plan.maxi_batch = 16;
  return o;
}

TEST(Trainer, ZeroEpochsAndZeroRateLeaveParameters) {
  Rng rng(1);
  Seq2Seq m(tiny(), rng);
  const auto before = snapshot(m);
  TrainerOptions none = sgd(0.1f);
  none.plan.epochs = 0;
  TrainSummary s = Trainer(m, none).fit({});
  EXPECT_EQ(s.epochs, 0u);
  EXPECT_EQ(s.updates, 0u);
  EXPECT_EQ(snapshot(m), before);

  TrainerOptions frozen = sgd(0.0f);
  frozen.plan.epochs = 2;
  s = Trainer(m, frozen).fit(copy_pairs(10, 2));
  EXPECT_EQ(s.updates, 2u * 3u);
  EXPECT_EQ(snapshot(m), before);
  EXPECT_THROW(Trainer(m, frozen).fit({}), DataError);
}

TEST(Trainer, AveragingEqualsSummingAtScaledRate) {
  const auto pairs = wrap_pairs(copy_pairs(4, 3));
  std::vector<std::size_t> idx{0, 1, 2, 3};
  Batch batch = make_batch(pairs, idx);
  Rng r1(5), r2(5), s1(0), s2(0);
  Seq2Seq a(tiny(), r1), b(tiny(), r2);
  TrainerOptions avg = sgd(0.4f), sum = sgd(0.1f);
  sum.average = false;
  Trainer ta(a, avg), tb(b, sum);
  const double la = ta.step(batch, s1), lb = tb.step(batch, s2);
  EXPECT_DOUBLE_EQ(la, lb);
  const auto pa = snapshot(a), pb = snapshot(b);
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i].size(); ++k) EXPECT_NEAR(pa[i][k], pb[i][k], 1e-6);
}

TEST(Trainer, LearnsTinyCopyTaskDeterministically) {
  auto run = [] {
    Rng rng(6);
    Seq2Seq m(tiny(), rng);
    TrainerOptions o;
    o.optimizer = OptimizerConfig::defaults(OptimizerKind::kAdam);
    o.optimizer.learning_rate = 0.02f;
    o.plan.epochs = 15;
    o.plan.mini_batch = 8;
    o.plan.maxi_batch = 64;
    Trainer t(m, o);
    TrainSummary s = t.fit(copy_pairs(64, 7));
    return std::pair{s.train_loss, snapshot(m)};
  };
  auto [loss, params] = run();
  ASSERT_EQ(loss.size(), 15u);
  EXPECT_LT(loss.back(), 0.5 * loss.front());
  auto [loss2, params2] = run();
  EXPECT_EQ(loss, loss2);
  EXPECT_EQ(params, params2);
}

TEST(Trainer, EvaluateSumsSequenceLosses) {
  Rng rng(8);
  Seq2Seq m(tiny(), rng);
  Trainer t(m, sgd(0.1f));
  const auto pairs = copy_pairs(7, 9);
  Evaluation ev = t.evaluate(pairs, 3);
  double nll = 0;
  std::size_t tokens = 0;
  for (const auto& p : wrap_pairs(pairs)) {
    std::vector<SentencePair> one{p};
    std::vector<std::size_t> idx{0};
    Tape tape;
    nll += m.sequence_loss(tape, make_batch(one, idx)).nll.value().item();
    tokens += p.target.size();
  }
  EXPECT_NEAR(ev.nll, nll, 1e-4);
  EXPECT_EQ(ev.tokens, tokens);
  EXPECT_EQ(ev.sentences, 7u);
  EXPECT_NEAR(ev.perplexity(), std::exp(nll / tokens), 1e-3);
}

TEST(Trainer, EarlyStoppingHooksAndLog) {
  Rng rng(10);
  Seq2Seq m(tiny(), rng);
  TrainerOptions o = sgd(0.0f);
  o.plan.epochs = 10;
  o.patience = 2;
  o.checkpoint_every = 2;
  std::ostringstream log;
  Trainer t(m, o, &log);
  std::vector<Trainer::Event> events;
  t.on_checkpoint([&](Trainer::Event e, std::size_t, std::size_t) { events.push_back(e); });
  TrainSummary s = t.fit(copy_pairs(8, 11), copy_pairs(3, 12));
  // A frozen model never improves after the first validation.
  EXPECT_TRUE(s.stopped_early);
  EXPECT_EQ(s.epochs, 3u);
  EXPECT_EQ(s.valid_loss.size(), 3u);
  EXPECT_EQ(std::count(events.begin(), events.end(), Trainer::Event::kBest), 1);
  EXPECT_EQ(std::count(events.begin(), events.end(), Trainer::Event::kEpoch), 3);
  EXPECT_EQ(std::count(events.begin(), events.end(), Trainer::Event::kPeriodic), 3);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t train = 0, valid = 0;
  while (std::getline(lines, line)) {
    train += line.rfind("train\t", 0) == 0;
    valid += line.rfind("valid\t", 0) == 0;
  }
  EXPECT_EQ(train, 3u);
  EXPECT_EQ(valid, 3u);
}

}  // namespace
}  // namespace nmt
