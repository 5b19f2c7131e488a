// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the numeric kernels the rest of the toolkit is
// built on. Storage is 32-bit; reductions accumulate in 64-bit.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nmt/errors.hpp"

namespace nmt {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor vector(std::initializer_list<float> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor scalar(float value) { return Tensor({1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading extent for matrices; 1 for vectors.
  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  /// Trailing extent.
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* begin() { return data_.data(); }
  float* end() { return data_.data() + data_.size(); }
  const float* begin() const { return data_.data(); }
  const float* end() const { return data_.data() + data_.size(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Scalar value of a one-element tensor.
  float item() const;

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(float value);
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
bool all_finite(const Tensor& t);

// ---------------------------------------------------------------------------
// Linear algebra

/// c = a·b. Accepts [m×k]·[k×n] -> [m×n], [m×k]·[k] -> [m] and [k]·[k×n] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// c = a·bᵀ for a [m×k], b [n×k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// c = aᵀ·b for a [k×m], b [k×n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
/// y += alpha * x
void axpy(float alpha, const Tensor& x, Tensor& y);

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);

// ---------------------------------------------------------------------------
// Activations

enum class Activation { kSigmoid, kTanh, kRelu, kIdentity };

const char* to_string(Activation kind);

Tensor activation(Activation kind, const Tensor& x);

/// Derivative of the activation. For sigmoid and tanh the argument is the
/// forward output y; for relu it is the pre-activation x.
Tensor activation_grad(Activation kind, const Tensor& y_or_x);

float sigmoid(float x);

// ---------------------------------------------------------------------------
// Normalisation

/// Max-shifted softmax over a vector, or over each row of a matrix.
Tensor softmax(const Tensor& v);

/// Log of the partition function log Σ exp(v) per row (or for a vector).
Tensor log_sum_exp(const Tensor& v);

inline constexpr float kLayerNormEpsilon = 1e-6f;

/// g/(σ+ε) ∘ (s − μ) + b with population mean and deviation, per row.
Tensor layer_norm(const Tensor& s, const Tensor& gain, const Tensor& bias);

}  // namespace nmt
