// SPDX-License-Identifier: Apache-2.0
#include "nmt/optim.hpp"

#include <cmath>

namespace nmt {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdagrad: return "adagrad";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adagrad") return OptimizerKind::kAdagrad;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

OptimizerConfig OptimizerConfig::defaults(OptimizerKind kind) {
  OptimizerConfig c;
  c.kind = kind;
  c.learning_rate = (kind == OptimizerKind::kSgd || kind == OptimizerKind::kMomentum) ? 0.1f : 0.001f;
  return c;
}

void sgd_step(Tensor& w, const Tensor& g, float lr) { axpy(-lr, g, w); }

void momentum_step(Tensor& m, Tensor& w, const Tensor& g, float lr, float decay) {
  if (decay < 0.0f || decay >= 1.0f) throw std::invalid_argument("momentum decay must be in [0,1)");
  require_same_shape(w, g, "momentum_step");
  require_same_shape(m, g, "momentum_step");
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = decay * m[i] + g[i];
    w[i] -= lr * m[i];
  }
}

void adagrad_step(Tensor& v, Tensor& w, const Tensor& g, float lr, float epsilon) {
  require_same_shape(w, g, "adagrad_step");
  require_same_shape(v, g, "adagrad_step");
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] += g[i] * g[i];
    w[i] -= static_cast<float>(lr * g[i] / (std::sqrt(static_cast<double>(v[i])) + epsilon));
  }
}

void adam_step(Tensor& m, Tensor& v, std::int64_t t, Tensor& w, const Tensor& g,
               const OptimizerConfig& c) {
  if (t < 1) throw std::invalid_argument("adam_step needs t >= 1");
  require_same_shape(w, g, "adam_step");
  require_same_shape(m, g, "adam_step");
  require_same_shape(v, g, "adam_step");
  const double c1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(t));
  const double c2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i];
    const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
    const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double m_hat = mi / c1;
    const double v_hat = vi / c2;
    w[i] = static_cast<float>(w[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

double clip_gradients(Gradients& grads, float tau) {
  if (tau <= 0.0f) throw std::invalid_argument("clip threshold must be positive");
  const double norm = grads.global_norm();
  if (norm > tau) grads.scale(static_cast<float>(tau / norm));
  return norm;
}

Optimizer::Optimizer(OptimizerConfig config, const ParameterSet& params) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    state_.m.emplace_back(params[i].value.shape());
    state_.v.emplace_back(params[i].value.shape());
  }
}

void Optimizer::apply(ParameterSet& params, Gradients& grads) {
  if (params.size() != state_.m.size() || grads.size() != params.size()) {
    throw ShapeError("optimizer, parameters and gradients disagree in size");
  }
  if (config_.clip > 0.0f) clip_gradients(grads, config_.clip);
  ++state_.t;
  const float lr = config_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.trainable) continue;
    switch (config_.kind) {
      case OptimizerKind::kSgd: sgd_step(p.value, grads[i], lr); break;
      case OptimizerKind::kMomentum: momentum_step(state_.m[i], p.value, grads[i], lr, config_.momentum_decay); break;
      case OptimizerKind::kAdagrad: adagrad_step(state_.v[i], p.value, grads[i], lr, config_.epsilon); break;
      case OptimizerKind::kAdam: adam_step(state_.m[i], state_.v[i], state_.t, p.value, grads[i], config_); break;
    }
  }
}

void Optimizer::restore(OptimizerState state) {
  if (state.m.size() != state_.m.size() || state.v.size() != state_.v.size()) {
    throw ShapeError("optimizer state does not match the parameter set");
  }
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    require_same_shape(state.m[i], state_.m[i], "optimizer state");
    require_same_shape(state.v[i], state_.v[i], "optimizer state");
  }
  state_ = std::move(state);
}

}  // namespace nmt
