// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "nmt/layers.hpp"

namespace nmt {
namespace {

using Vec = std::vector<double>;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// W·x for a parameter matrix in double precision.
Vec mv(const Parameter& w, const Vec& x) {
  Vec y(w.value.rows(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += w.value(i, j) * x[j];
  return y;
}

Vec row_of(const Tensor& t, std::size_t r = 0) { return Vec(t.row(r).begin(), t.row(r).end()); }

Tensor as_row(const Vec& v) {
  Tensor t({1, v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

Vec random_vec(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1, 1);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

void randomise(ParameterSet& params, Rng& rng, float scale = 1.0f) {
  std::uniform_real_distribution<float> dist(-scale, scale);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (auto& v : params[i].value) v = dist(rng);
}

TEST(Embedding, EqualsOneHotMatmul) {
  Rng rng(1);
  ParameterSet params;
  Embedding e = make_embedding(params, "E", 5, 3, rng);
  Tape tape;
  for (int id = 0; id < 5; ++id) {
    Tensor one_hot({5});
    one_hot[id] = 1.0f;
    Tensor expected = matmul(one_hot, e.table->value);
    EXPECT_EQ(embed(tape, e, id).value(), expected);
  }
  EXPECT_THROW(embed(tape, e, 5), RangeError);
}

TEST(Embedding, GradientOnlyInSelectedRows) {
  Rng rng(2);
  ParameterSet params;
  Embedding e = make_embedding(params, "E", 4, 2, rng);
  Tape tape;
  Expr loss = sum(embed(tape, e, std::vector<int>{2, 2, 0}));
  tape.backward(loss);
  Gradients g(params);
  tape.accumulate(g);
  const Tensor& ge = g[*e.table];
  EXPECT_EQ(ge(0, 0), 1.0f);
  EXPECT_EQ(ge(2, 1), 2.0f);
  EXPECT_EQ(ge(1, 0), 0.0f);
  EXPECT_EQ(ge(3, 1), 0.0f);
}

TEST(Embedding, BatchLookupMatchesLoop) {
  Rng rng(3);
  ParameterSet params;
  Embedding e = make_embedding(params, "E", 6, 4, rng);
  Tape tape;
  std::vector<int> ids{5, 0, 3, 3};
  Expr batch = embed(tape, e, ids);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    Tensor single = embed(tape, e, ids[b]).value();
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(batch.value()(b, c), single[c]);
  }
}

TEST(Embedding, FactoredSums) {
  Rng rng(4);
  ParameterSet params;
  std::vector<Embedding> f{make_embedding(params, "E0", 5, 3, rng), make_embedding(params, "E1", 4, 3, rng),
                           make_embedding(params, "E2", 3, 3, rng)};
  Tape tape;
  std::vector<int> w{1, 4}, a{0, 3}, c{2, 1};
  const Tensor plain = embed(tape, f[0], w).value();
  EXPECT_EQ(embed_factored(tape, std::span(f).first(1), {w}).value(), plain);

  Tensor sum3 = embed_factored(tape, f, {w, a, c}).value();
  Tensor oracle = add(add(embed(tape, f[0], w).value(), embed(tape, f[1], a).value()), embed(tape, f[2], c).value());
  for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(sum3[i], oracle[i], 1e-6);

  params.at("E1").value.fill(0.0f);
  Tape fresh;
  EXPECT_EQ(embed_factored(fresh, std::span(f).first(2), {w, a}).value(), plain);
  EXPECT_THROW(embed_factored(fresh, f, {w, a}), ShapeError);
}

TEST(FeedForward, WorkedHiddenLayer) {
  Rng rng(5);
  ParameterSet params;
  FeedForward ff = make_feed_forward(params, "h", 2, 2, Activation::kSigmoid, InitKind::kHidden, rng);
  params.at("h.W").value = Tensor::matrix({{3, 4}, {2, 3}});
  params.at("h.b").value = Tensor::vector({-2, -4});
  Tape tape;
  Tensor h = ff_apply(tape, ff, tape.constant(Tensor::vector({1, 0}))).value();
  EXPECT_NEAR(h[0], 0.731, 1e-3);
  EXPECT_NEAR(h[1], 0.119, 1e-3);
}

TEST(FeedForward, ZeroWeightsGiveActivatedBias) {
  Rng rng(6);
  ParameterSet params;
  FeedForward ff = make_feed_forward(params, "f", 3, 2, Activation::kTanh, InitKind::kOutput, rng);
  params.at("f.W").value.fill(0.0f);
  params.at("f.b").value = Tensor::vector({0.5f, -1.0f});
  Tape tape;
  Tensor y = ff_apply(tape, ff, tape.constant(Tensor::vector({7, 8, 9}))).value();
  EXPECT_NEAR(y[0], std::tanh(0.5), 1e-7);
  EXPECT_NEAR(y[1], std::tanh(-1.0), 1e-7);
}

TEST(FeedForward, MatchesKernelComposition) {
  Rng rng(7);
  ParameterSet params;
  FeedForward ff = make_feed_forward(params, "f", 3, 4, Activation::kRelu, InitKind::kHidden, rng);
  randomise(params, rng);
  Tensor x = Tensor::matrix({{0.1f, 0.5f, -0.3f}, {1.0f, -1.0f, 0.2f}});
  Tape tape;
  Tensor y = ff_apply(tape, ff, tape.constant(x)).value();
  Tensor pre = matmul_nt(x, ff.w->value);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y(r, c), std::max(0.0f, pre(r, c) + ff.b->value[c]), 1e-6);
}

class CellTest : public ::testing::Test {
 protected:
  static constexpr std::size_t kIn = 3, kHidden = 2;
  Rng rng_{11};
  ParameterSet params_;

  RecurrentCell make(CellKind kind, bool fold = false) {
    RecurrentCell cell(params_, "c", kind, kIn, kHidden, rng_, fold);
    randomise(params_, rng_);
    return cell;
  }
  Parameter& p(const std::string& local) { return params_.at("c." + local); }
  Vec affine(const std::string& w, const std::string& u, const std::string& b, const Vec& x, const Vec& h) {
    Vec a = mv(p(w), x), c = mv(p(u), h);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += c[i] + (b.empty() ? 0.0 : p(b).value[i]);
    return a;
  }
};

TEST_F(CellTest, LstmMatchesScalarComputation) {
  RecurrentCell cell = make(CellKind::kLstm);
  Vec x = random_vec(kIn, rng_), h = random_vec(kHidden, rng_), m = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(h)), tape.constant(as_row(m))});

  Vec input = affine("Wx", "Wh", "b", x, h);
  for (auto& v : input) v = std::tanh(v);
  Vec gate[3];
  const char* names[3] = {"input", "forget", "output"};
  for (int k = 0; k < 3; ++k) {
    const std::string g = names[k];
    gate[k] = affine("Wx_" + g, "Wh_" + g, "b_" + g, x, h);
    Vec mm = mv(p("Wm_" + g), m);
    for (std::size_t i = 0; i < kHidden; ++i) gate[k][i] = sig(gate[k][i] + mm[i]);
  }
  for (std::size_t i = 0; i < kHidden; ++i) {
    const double mem = gate[0][i] * input[i] + gate[1][i] * m[i];
    EXPECT_NEAR(out.m.value()[i], mem, 1e-6);
    EXPECT_NEAR(out.h.value()[i], std::tanh(gate[2][i] * mem), 1e-6);
  }
}

TEST_F(CellTest, LstmForgetOpenInputClosedKeepsMemory) {
  RecurrentCell cell = make(CellKind::kLstm);
  p("b_forget").value.fill(1e4f);
  p("b_input").value.fill(-1e4f);
  Vec x = random_vec(kIn, rng_), h = random_vec(kHidden, rng_), m = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(h)), tape.constant(as_row(m))});
  for (std::size_t i = 0; i < kHidden; ++i) EXPECT_NEAR(out.m.value()[i], m[i], 1e-6);
}

TEST_F(CellTest, LstmClosedGatesGiveZeroOutput) {
  RecurrentCell cell = make(CellKind::kLstm);
  for (const char* g : {"b_input", "b_forget", "b_output"}) p(g).value.fill(-1e4f);
  Vec x = random_vec(kIn, rng_), h = random_vec(kHidden, rng_), m = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(h)), tape.constant(as_row(m))});
  for (std::size_t i = 0; i < kHidden; ++i) EXPECT_NEAR(out.h.value()[i], 0.0, 1e-6);
}

TEST_F(CellTest, LstmSaturatedGatesReduceToPlainRecurrentStep) {
  RecurrentCell cell = make(CellKind::kLstm);
  p("b_input").value.fill(1e4f);
  p("b_forget").value.fill(-1e4f);
  p("b_output").value.fill(1e4f);
  Vec x = random_vec(kIn, rng_), h = random_vec(kHidden, rng_), m = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(h)), tape.constant(as_row(m))});
  Vec pre = affine("Wx", "Wh", "b", x, h);
  for (std::size_t i = 0; i < kHidden; ++i) EXPECT_NEAR(out.h.value()[i], std::tanh(std::tanh(pre[i])), 1e-6);
}

TEST_F(CellTest, GruMatchesScalarComputation) {
  for (bool fold : {false, true}) {
    params_ = ParameterSet();
    RecurrentCell cell = make(CellKind::kGru, fold);
    Vec x = random_vec(kIn, rng_), s = random_vec(kHidden, rng_);
    Tape tape;
    CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(s)), {}});
    Vec z = affine("Wz", "Uz", "bz", x, s), r = affine("Wr", "Ur", "br", x, s);
    for (auto& v : z) v = sig(v);
    for (auto& v : r) v = sig(v);
    Vec rs(kHidden);
    for (std::size_t i = 0; i < kHidden; ++i) rs[i] = r[i] * s[i];
    Vec wx = mv(p("W"), x), urs = mv(p("U"), rs);
    for (std::size_t i = 0; i < kHidden; ++i) {
      const double b = p("b").value[i];
      const double comb = std::tanh(wx[i] + urs[i] + (fold ? b : 0.0));
      const double expected = (1 - z[i]) * s[i] + z[i] * comb + (fold ? 0.0 : b);
      EXPECT_NEAR(out.h.value()[i], expected, 1e-6) << "fold=" << fold;
    }
  }
}

TEST_F(CellTest, GruClosedUpdatePassesStateThrough) {
  RecurrentCell cell = make(CellKind::kGru);
  p("bz").value.fill(-1e4f);
  Vec x = random_vec(kIn, rng_), s = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(s)), {}});
  for (std::size_t i = 0; i < kHidden; ++i) EXPECT_NEAR(out.h.value()[i], s[i] + p("b").value[i], 1e-6);
}

TEST_F(CellTest, GruOpenGatesArePlainRecurrentStep) {
  RecurrentCell cell = make(CellKind::kGru);
  p("bz").value.fill(1e4f);
  p("br").value.fill(1e4f);
  p("b").value.fill(0.0f);
  Vec x = random_vec(kIn, rng_), s = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(s)), {}});
  Vec pre = affine("W", "U", "", x, s);
  for (std::size_t i = 0; i < kHidden; ++i) EXPECT_NEAR(out.h.value()[i], std::tanh(pre[i]), 1e-6);
}

TEST_F(CellTest, GruInterpolatesMonotonically) {
  RecurrentCell cell = make(CellKind::kGru);
  Vec x = random_vec(kIn, rng_), s = random_vec(kHidden, rng_);
  std::vector<Vec> path;
  for (float bz = -30.0f; bz <= 30.0f; bz += 1.0f) {
    p("bz").value.fill(bz);
    Tape tape;
    path.push_back(row_of(cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(s)), {}}).h.value()));
  }
  for (std::size_t i = 0; i < kHidden; ++i) {
    const double start = s[i] + p("b").value[i], end = path.back()[i];
    EXPECT_NEAR(path.front()[i], start, 1e-6);
    const double dir = end >= start ? 1.0 : -1.0;
    for (std::size_t k = 1; k < path.size(); ++k) EXPECT_GE(dir * (path[k][i] - path[k - 1][i]), -1e-6);
  }
}

TEST_F(CellTest, RnnMatchesScalarComputation) {
  RecurrentCell cell = make(CellKind::kRnn);
  Vec x = random_vec(kIn, rng_), h = random_vec(kHidden, rng_);
  Tape tape;
  CellState out = cell.step(tape, tape.constant(as_row(x)), {tape.constant(as_row(h)), {}});
  Vec pre = affine("W", "U", "b", x, h);
  for (std::size_t i = 0; i < kHidden; ++i) EXPECT_NEAR(out.h.value()[i], std::tanh(pre[i]), 1e-6);
}

TEST_F(CellTest, RejectsWrongWidths) {
  RecurrentCell cell = make(CellKind::kRnn);
  Tape tape;
  EXPECT_THROW(cell.step(tape, tape.constant(Tensor({1, 4})), cell.zero_state(tape, 1)), ShapeError);
  EXPECT_THROW(cell.step(tape, tape.constant(Tensor({1, 3})), {tape.constant(Tensor({1, 5})), {}}), ShapeError);
}

struct CellCase {
  CellKind kind;
  bool fold;
};

class CellGradient : public ::testing::TestWithParam<CellCase> {};

TEST_P(CellGradient, InputsStatesAndParameters) {
  Rng rng(21);
  ParameterSet params;
  RecurrentCell cell(params, "c", GetParam().kind, 3, 2, rng, GetParam().fold);
  randomise(params, rng, 0.8f);
  std::uniform_real_distribution<float> dist(-1, 1);
  auto leaf = [&](const std::string& name) -> Parameter& {
    Tensor t({2, name == "x" ? 3u : 2u});
    for (auto& v : t) v = dist(rng);
    return params.add(name, t);
  };
  Parameter& x = leaf("x");
  Parameter& h = leaf("h");
  Parameter& m = leaf("m");
  const Tensor probe = Tensor::matrix({{0.3f, -0.8f}, {1.1f, 0.4f}});
  auto r = testing::check_gradients(params, [&](Tape& t) {
    CellState prev{t.parameter(h), cell.kind() == CellKind::kLstm ? t.parameter(m) : Expr{}};
    CellState s1 = cell.step(t, t.parameter(x), prev);
    CellState s2 = cell.step(t, t.parameter(x), s1);
    Expr loss = sum(mul(s2.h, t.constant(probe)));
    if (s2.m.valid()) loss = add(loss, sum(mul(s2.m, t.constant(probe))));
    return loss;
  });
  EXPECT_TRUE(r.ok()) << r.rel_error << " worst " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(AllKinds, CellGradient,
                         ::testing::Values(CellCase{CellKind::kRnn, false}, CellCase{CellKind::kLstm, false},
                                           CellCase{CellKind::kGru, false}, CellCase{CellKind::kGru, true}));

TEST(Stack, DepthOneIsASingleCellInBothModes) {
  for (DeepMode mode : {DeepMode::kStacked, DeepMode::kTransition}) {
    Rng rng(31);
    ParameterSet a;
    RecurrentStack stack(a, "s", CellKind::kGru, mode, 1, 3, 2, rng);
    Rng rng2(31);
    ParameterSet b;
    RecurrentCell cell(b, "s", CellKind::kGru, 3, 2, rng2);
    Tape tape;
    Expr x = tape.constant(Tensor::matrix({{0.2f, -0.1f, 0.7f}}));
    auto s = stack.step(tape, x, stack.zero_state(tape, 1));
    const Tensor from_stack = RecurrentStack::top(s).h.value();
    EXPECT_EQ(from_stack, cell.step(tape, x, cell.zero_state(tape, 1)).h.value());
  }
}

TEST(Stack, ModesWireLayersDifferently) {
  Rng rng(32);
  ParameterSet params;
  RecurrentStack stacked(params, "a", CellKind::kLstm, DeepMode::kStacked, 2, 3, 2, rng);
  RecurrentStack transition(params, "b", CellKind::kLstm, DeepMode::kTransition, 2, 3, 2, rng);
  EXPECT_EQ(stacked.cell(1).input_size(), 2u);
  EXPECT_EQ(transition.cell(1).input_size(), 0u);
  Tape tape;
  EXPECT_EQ(stacked.zero_state(tape, 4).size(), 2u);
  EXPECT_EQ(transition.zero_state(tape, 4).size(), 1u);
}

TEST(Stack, GradientsForBothModes) {
  for (DeepMode mode : {DeepMode::kStacked, DeepMode::kTransition}) {
    Rng rng(33);
    ParameterSet params;
    RecurrentStack stack(params, "s", CellKind::kGru, mode, 2, 2, 2, rng);
    Parameter& x = params.add("x", Tensor::matrix({{0.4f, -0.6f}}));
    auto r = testing::check_gradients(params, [&](Tape& t) {
      auto s = stack.step(t, t.parameter(x), stack.zero_state(t, 1));
      s = stack.step(t, t.parameter(x), s);
      return sum(mul(RecurrentStack::top(s).h, t.constant(Tensor::matrix({{1.0f, -0.5f}}))));
    });
    EXPECT_TRUE(r.ok()) << to_string(mode) << " " << r.rel_error;
  }
}

TEST(Dropout, IdentityCases) {
  Rng rng(41);
  Tape tape;
  Tensor x = Tensor::vector({1, 2, 3, 4});
  EXPECT_EQ(dropout_apply(tape.constant(x), {0.0f, &rng}, true).value(), x);
  EXPECT_EQ(dropout_apply(tape.constant(x), {0.5f, &rng}, false).value(), x);
}

TEST(Dropout, MonteCarloMeanPreserved) {
  Rng rng(42);
  Tape tape;
  Expr x = tape.constant(Tensor::vector({1.0f, -2.0f, 0.5f}));
  const float rate = 0.3f;
  const int n = 10000;
  double sums[3] = {0, 0, 0};
  for (int k = 0; k < n; ++k) {
    Tensor y = dropout_apply(x, {rate, &rng}, true).value();
    for (int i = 0; i < 3; ++i) {
      EXPECT_TRUE(y[i] == 0.0f || std::abs(y[i] - x.value()[i] / (1 - rate)) < 1e-6);
      sums[i] += y[i];
    }
  }
  for (int i = 0; i < 3; ++i) {
    const double xi = x.value()[i];
    const double sigma = std::abs(xi) * std::sqrt(rate / (1 - rate) / n);
    EXPECT_NEAR(sums[i] / n, xi, 3 * sigma);
  }
}

TEST(Dropout, SeededMasksReproduce) {
  auto draw = [] {
    Rng rng(43);
    Tape tape;
    return dropout_apply(tape.constant(Tensor({50}, 1.0f)), {0.5f, &rng}, true).value();
  };
  EXPECT_EQ(draw(), draw());
}

TEST(Init, OutputLayerBounds) {
  Rng rng(51);
  Tensor t = init_weights({1000, 1}, InitKind::kOutput, rng);
  for (float v : t) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Init, HiddenLayerBoundAndSampleMoments) {
  Rng rng(52);
  Tensor small = init_weights({3, 3}, InitKind::kHidden, rng);
  for (float v : small) EXPECT_LE(std::abs(v), 1.0f);

  Tensor big = init_weights({100, 1000}, InitKind::kHidden, rng);
  const double bound = std::sqrt(6.0) / std::sqrt(1100.0);
  double lo = 1, hi = -1, mean = 0;
  for (float v : big) {
    lo = std::min<double>(lo, v);
    hi = std::max<double>(hi, v);
    mean += v;
  }
  mean /= static_cast<double>(big.size());
  EXPECT_GE(lo, -bound);
  EXPECT_LE(hi, bound);
  EXPECT_GT(hi, 0.99 * bound);
  EXPECT_LT(std::abs(mean), 0.01 * bound);
  EXPECT_EQ(init_weights({4}, InitKind::kBias, rng), Tensor({4}, 0.0f));
}

}  // namespace
}  // namespace nmt
