// SPDX-License-Identifier: Apache-2.0
#include "nmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace nmt {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw ShapeError("tensor rank must be 1-3, got shape " + to_string(shape));
  }
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + to_string(shape));
  }
}

std::string mismatch(const char* what, const Tensor& a, const Tensor& b) {
  return std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
         to_string(b.shape());
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (data_.size() != product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return Tensor({values.size()}, std::vector<float>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t n = rows.size() ? rows.begin()->size() : 0;
  std::vector<float> values;
  values.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), n}, std::move(values));
}

float Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!same_shape(a, b)) throw ShapeError(mismatch(what, a, b));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.begin(), t.end(), [](float v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 1 && b.rank() == 2) {
    if (a.size() != b.shape()[0]) throw ShapeError(mismatch("matmul", a, b));
    Tensor row = a.reshaped({1, a.size()});
    return matmul(row, b).reshaped({b.shape()[1]});
  }
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2)) throw ShapeError(mismatch("matmul", a, b));
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  if (b.shape()[0] != k) throw ShapeError(mismatch("matmul", a, b));
  const std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;

  Tensor c(b.rank() == 2 ? Shape{m, n} : Shape{m});
  std::vector<double> acc(n);
  const float* pa = a.begin();
  const float* pb = b.begin();
  float* pc = c.begin();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = pa[i * k + t];
      if (av == 0.0) continue;
      const float* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) pc[i * n + j] = static_cast<float>(acc[j]);
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1]) {
    throw ShapeError(mismatch("matmul_nt", a, b));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t n = b.shape()[0];
  const std::size_t k = a.shape()[1];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a.begin() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b.begin() + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += static_cast<double>(arow[t]) * brow[t];
      c(i, j) = static_cast<float>(acc);
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError(mismatch("matmul_tn", a, b));
  }
  const std::size_t k = a.shape()[0];
  const std::size_t m = a.shape()[1];
  const std::size_t n = b.shape()[1];
  std::vector<double> acc(m * n, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    const float* arow = a.begin() + t * m;
    const float* brow = b.begin() + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = acc.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  Tensor c({m, n});
  std::transform(acc.begin(), acc.end(), c.begin(), [](double v) { return static_cast<float>(v); });
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() == 1) return a.reshaped({a.size(), 1});
  if (a.rank() != 2) throw ShapeError("transpose of rank-3 tensor");
  Tensor t({a.shape()[1], a.shape()[0]});
  for (std::size_t i = 0; i < a.shape()[0]; ++i)
    for (std::size_t j = 0; j < a.shape()[1]; ++j) t(j, i) = a(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Tensor scale(const Tensor& a, float factor) {
  Tensor c = a;
  for (auto& v : c) v *= factor;
  return c;
}

void axpy(float alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a) s += v;
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError(mismatch("dot", a, b));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

const char* to_string(Activation kind) {
  switch (kind) {
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

float sigmoid(float x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor activation(Activation kind, const Tensor& x) {
  Tensor y = x;
  switch (kind) {
    case Activation::kSigmoid:
      for (auto& v : y) v = sigmoid(v);
      break;
    case Activation::kTanh:
      for (auto& v : y) v = std::tanh(v);
      break;
    case Activation::kRelu:
      for (auto& v : y) v = std::max(0.0f, v);
      break;
    case Activation::kIdentity:
      break;
  }
  return y;
}

Tensor activation_grad(Activation kind, const Tensor& y_or_x) {
  Tensor d = y_or_x;
  switch (kind) {
    case Activation::kSigmoid:
      for (auto& v : d) v = v * (1.0f - v);
      break;
    case Activation::kTanh:
      for (auto& v : d) v = 1.0f - v * v;
      break;
    case Activation::kRelu:
      for (auto& v : d) v = v > 0.0f ? 1.0f : 0.0f;
      break;
    case Activation::kIdentity:
      d.fill(1.0f);
      break;
  }
  return d;
}

Tensor softmax(const Tensor& v) {
  if (v.rank() > 2) throw ShapeError("softmax expects a vector or matrix, got " + to_string(v.shape()));
  Tensor p = v;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    const float mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& x : row) {
      x = std::exp(x - mx);
      z += x;
    }
    for (auto& x : row) x = static_cast<float>(x / z);
  }
  return p;
}

Tensor log_sum_exp(const Tensor& v) {
  if (v.rank() > 2) throw ShapeError("log_sum_exp expects a vector or matrix");
  Tensor out({v.rows()});
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    const float mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float x : row) z += std::exp(static_cast<double>(x) - mx);
    out[r] = static_cast<float>(mx + std::log(z));
  }
  return out;
}

Tensor layer_norm(const Tensor& s, const Tensor& gain, const Tensor& bias) {
  if (s.rank() > 2 || gain.rank() != 1 || bias.rank() != 1 || gain.size() != s.cols() ||
      bias.size() != s.cols()) {
    throw ShapeError("layer_norm: shapes " + to_string(s.shape()) + ", gain " +
                     to_string(gain.shape()) + ", bias " + to_string(bias.shape()));
  }
  Tensor out = s;
  const std::size_t h = s.cols();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto row = out.row(r);
    double mean = 0.0;
    for (float x : row) mean += x;
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (float x : row) var += (x - mean) * (x - mean);
    const double sigma = std::sqrt(var / static_cast<double>(h));
    for (std::size_t i = 0; i < h; ++i) {
      row[i] = static_cast<float>(gain[i] / (sigma + kLayerNormEpsilon) * (row[i] - mean) + bias[i]);
    }
  }
  return out;
}

}  // namespace nmt
