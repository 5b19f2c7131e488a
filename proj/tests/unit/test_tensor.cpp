// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nmt/tensor.hpp"

namespace nmt {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t) v = dist(rng);
  return t;
}

/// Triple loop in double precision.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t t = 0; t < a.cols(); ++t) s += static_cast<long double>(a(i, t)) * b(t, j);
      c(i, j) = static_cast<float>(s);
    }
  return c;
}

TEST(Tensor, ShapeAndStorageAgree) {
  Tensor t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_EQ(Tensor::scalar(4).item(), 4.0f);
  EXPECT_THROW(Tensor({2}).item(), ShapeError);
}

TEST(Matmul, IdentityLeavesColumnUnchanged) {
  Tensor c = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3}, {2}}));
  EXPECT_EQ(c, Tensor::matrix({{3}, {2}}));
}

TEST(Matmul, HiddenLayerOfWorkedExample) {
  Tensor s = matmul(Tensor::matrix({{3, 4, -2}, {2, 3, -4}}), Tensor::vector({1, 0, 1}));
  ASSERT_EQ(s.shape(), Shape{2});
  EXPECT_FLOAT_EQ(s[0], 1.0f);
  EXPECT_FLOAT_EQ(s[1], -2.0f);
}

TEST(Matmul, MatchesNaiveLoop) {
  std::mt19937_64 rng(7);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tensor c = matmul(a, b), oracle = naive_matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], oracle[i], 1e-6);
}

TEST(Matmul, TransposedVariantsMatchExplicitTranspose) {
  std::mt19937_64 rng(8);
  Tensor a = random_tensor({3, 5}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({3, 2}, rng);
  Tensor nt = matmul_nt(a, b), ref_nt = naive_matmul(a, transpose(b));
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt[i], ref_nt[i], 1e-6);
  Tensor tn = matmul_tn(a, c), ref_tn = naive_matmul(transpose(a), c);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], ref_tn[i], 1e-6);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("2x3"), std::string::npos) << what;
    EXPECT_NE(what.find("2x2"), std::string::npos) << what;
  }
}

TEST(Matmul, ChainsAreAssociativeWithOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor({8, 8}, rng), b = random_tensor({8, 8}, rng), c = random_tensor({8, 8}, rng);
    Tensor left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    Tensor oracle = naive_matmul(naive_matmul(a, b), c);
    const double scale = std::sqrt(squared_norm(oracle));
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_LT(std::abs(left[i] - oracle[i]) / scale, 1e-4);
      EXPECT_LT(std::abs(right[i] - oracle[i]) / scale, 1e-4);
    }
  }
}

TEST(Activation, WorkedExampleValues) {
  EXPECT_NEAR(activation(Activation::kSigmoid, Tensor::vector({1}))[0], 0.731, 1e-3);
  EXPECT_NEAR(activation(Activation::kSigmoid, Tensor::vector({-2}))[0], 0.119, 1e-3);
}

TEST(Activation, FixedPoints) {
  EXPECT_EQ(activation(Activation::kTanh, Tensor::vector({0}))[0], 0.0f);
  EXPECT_EQ(activation(Activation::kRelu, Tensor::vector({-2}))[0], 0.0f);
  EXPECT_EQ(activation(Activation::kSigmoid, Tensor::vector({0}))[0], 0.5f);
}

TEST(ActivationGrad, SigmoidAtWorkedExampleSum) {
  Tensor y = activation(Activation::kSigmoid, Tensor::vector({1.060f}));
  EXPECT_NEAR(activation_grad(Activation::kSigmoid, y)[0], 0.191, 1e-3);
  EXPECT_FLOAT_EQ(activation_grad(Activation::kSigmoid, Tensor::vector({0.5f}))[0], 0.25f);
}

TEST(ActivationGrad, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  const double h = 1e-4;
  auto f = [](Activation k, double x) {
    switch (k) {
      case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
      case Activation::kTanh: return std::tanh(x);
      case Activation::kRelu: return std::max(0.0, x);
      default: return x;
    }
  };
  for (Activation kind : {Activation::kSigmoid, Activation::kTanh, Activation::kRelu}) {
    for (int i = 0; i < 20; ++i) {
      double x = dist(rng);
      if (kind == Activation::kRelu && std::abs(x) < 10 * h) x += 0.5;
      const double numeric = (f(kind, x + h) - f(kind, x - h)) / (2 * h);
      Tensor arg = kind == Activation::kRelu ? Tensor::vector({static_cast<float>(x)})
                                             : activation(kind, Tensor::vector({static_cast<float>(x)}));
      const double analytic = activation_grad(kind, arg)[0];
      EXPECT_LT(std::abs(analytic - numeric) / std::max(1e-3, std::abs(numeric)), 1e-4)
          << to_string(kind) << " at " << x;
    }
  }
}

TEST(Softmax, UniformAndSingleton) {
  Tensor p = softmax(Tensor::vector({2.5f, 2.5f, 2.5f, 2.5f}));
  for (float v : p) EXPECT_FLOAT_EQ(v, 0.25f);
  EXPECT_FLOAT_EQ(softmax(Tensor::vector({-7.0f}))[0], 1.0f);
}

TEST(Softmax, MatchesDirectFormula) {
  Tensor p = softmax(Tensor::vector({1, 2, 3}));
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], static_cast<double>(std::exp(i + 1.0L) / z), 1e-7);
}

TEST(Softmax, SimplexForLargeMagnitudes) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = random_tensor({3, 7}, rng, -1e4f, 1e4f);
    Tensor p = softmax(v);
    ASSERT_TRUE(all_finite(p));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (float x : p.row(r)) {
        EXPECT_GE(x, 0.0f);
        s += x;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(LogSumExp, AgreesWithSoftmaxNormaliser) {
  Tensor v = Tensor::vector({0.3f, -1.2f, 2.0f});
  const double direct = std::log(std::exp(0.3) + std::exp(-1.2) + std::exp(2.0));
  EXPECT_NEAR(log_sum_exp(v)[0], direct, 1e-6);
}

TEST(LayerNorm, StandardisedInputUnchanged) {
  Tensor s = Tensor::vector({-1, 1, -1, 1});
  Tensor out = layer_norm(s, Tensor({4}, 1.0f), Tensor({4}, 0.0f));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], s[i], 1e-5);
}

TEST(LayerNorm, ConstantInputYieldsBias) {
  Tensor out = layer_norm(Tensor({3}, 4.2f), Tensor::vector({2, -1, 3}), Tensor::vector({0.5f, 1, -2}));
  EXPECT_NEAR(out[0], 0.5, 1e-6);
  EXPECT_NEAR(out[1], 1.0, 1e-6);
  EXPECT_NEAR(out[2], -2.0, 1e-6);
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor s = random_tensor({6}, rng, -3, 3), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    double mu = 0;
    for (float v : s) mu += v;
    mu /= 6;
    double var = 0;
    for (float v : s) var += (v - mu) * (v - mu);
    const double sigma = std::sqrt(var / 6);
    Tensor out = layer_norm(s, g, b);
    for (std::size_t i = 0; i < 6; ++i)
      EXPECT_NEAR(out[i], g[i] / (sigma + kLayerNormEpsilon) * (s[i] - mu) + b[i], 1e-5);
  }
}

TEST(LayerNorm, NormalisedMomentsBeforeGain) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor s = random_tensor({16}, rng, -5, 5);
    Tensor out = layer_norm(s, Tensor({16}, 1.0f), Tensor({16}, 0.0f));
    double mu = 0, var = 0;
    for (float v : out) mu += v;
    mu /= 16;
    for (float v : out) var += (v - mu) * (v - mu);
    EXPECT_LT(std::abs(mu), 1e-5);
    EXPECT_NEAR(std::sqrt(var / 16), 1.0, 1e-4);
  }
}

TEST(LayerNorm, AppliesPerRow) {
  Tensor s = Tensor::matrix({{1, 2, 3}, {10, 10, 10}});
  Tensor out = layer_norm(s, Tensor({3}, 1.0f), Tensor({3}, 0.0f));
  Tensor first = layer_norm(Tensor::vector({1, 2, 3}), Tensor({3}, 1.0f), Tensor({3}, 0.0f));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_FLOAT_EQ(out(0, i), first[i]);
    EXPECT_FLOAT_EQ(out(1, i), 0.0f);
  }
}

TEST(Elementwise, RowBiasAndReductions) {
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(add(a, a), Tensor::matrix({{2, 4}, {6, 8}}));
  EXPECT_EQ(mul(a, a), Tensor::matrix({{1, 4}, {9, 16}}));
  EXPECT_DOUBLE_EQ(sum(a), 10.0);
  EXPECT_DOUBLE_EQ(dot(a, a), 30.0);
  EXPECT_THROW(add(a, Tensor({3})), ShapeError);
  Tensor y = Tensor::vector({1, 1});
  axpy(2.0f, Tensor::vector({1, -1}), y);
  EXPECT_EQ(y, Tensor::vector({3, -1}));
}

}  // namespace
}  // namespace nmt
