// SPDX-License-Identifier: Apache-2.0
//
// Parameter update rules. Each step function mutates the weight tensor in
// place; the Optimizer applies one rule across a whole ParameterSet.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nmt/graph.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

enum class OptimizerKind { kSgd, kMomentum, kAdagrad, kAdam };

std::string_view to_string(OptimizerKind kind);
/// Accepts "sgd", "momentum", "adagrad", "adam".
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  float learning_rate = 0.001f;
  float momentum_decay = 0.9f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  /// Global-norm clipping threshold; 0 disables clipping.
  float clip = 1.0f;

  /// Defaults for a rule: learning rate 0.1 for SGD and momentum, 0.001 otherwise.
  static OptimizerConfig defaults(OptimizerKind kind);
};

/// w ← w − μ·g
void sgd_step(Tensor& w, const Tensor& g, float lr);
/// m ← decay·m + g; w ← w − μ·m
void momentum_step(Tensor& m, Tensor& w, const Tensor& g, float lr, float decay);
/// v ← v + g²; w ← w − μ·g/(√v + ε)
void adagrad_step(Tensor& v, Tensor& w, const Tensor& g, float lr, float epsilon);
/// Bias-corrected Adam update for step number t ≥ 1.
void adam_step(Tensor& m, Tensor& v, std::int64_t t, Tensor& w, const Tensor& g,
               const OptimizerConfig& config);

/// Scales all gradients by τ/N when their global L2 norm N exceeds τ.
/// Returns N, measured before clipping.
double clip_gradients(Gradients& grads, float tau);

/// Per-parameter accumulators plus the shared step count.
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const ParameterSet& params);

  /// Clips (if configured) and applies one update to every trainable
  /// parameter. Increments the step count by exactly one.
  void apply(ParameterSet& params, Gradients& grads);

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(float lr) { config_.learning_rate = lr; }
  const OptimizerState& state() const { return state_; }
  /// Restores accumulators, e.g. from a checkpoint. Shapes must match.
  void restore(OptimizerState state);

 private:
  OptimizerConfig config_;
  OptimizerState state_;
};

}  // namespace nmt
