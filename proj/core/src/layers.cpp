// SPDX-License-Identifier: Apache-2.0
#include "nmt/layers.hpp"

#include <cmath>

namespace nmt {

Tensor init_weights(const Shape& shape, InitKind kind, Rng& rng) {
  Tensor t(shape, 0.0f);
  if (kind == InitKind::kBias) return t;
  const double fan_in = static_cast<double>(shape.back());
  const double fan_out = shape.size() >= 2 ? static_cast<double>(shape[shape.size() - 2]) : 0.0;
  const double bound = kind == InitKind::kOutput ? 1.0 / std::sqrt(fan_in)
                                                 : std::sqrt(6.0) / std::sqrt(fan_in + fan_out);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t) v = static_cast<float>(dist(rng));
  return t;
}

// Embeddings --------------------------------------------------------------------

Embedding make_embedding(ParameterSet& params, const std::string& name, std::size_t vocab,
                         std::size_t dim, Rng& rng) {
  return {&params.add(name, init_weights({vocab, dim}, InitKind::kHidden, rng))};
}

Expr embed(Tape& tape, const Embedding& e, int id) { return row(embed(tape, e, std::vector<int>{id}), 0); }

Expr embed(Tape& tape, const Embedding& e, const std::vector<int>& ids) {
  return lookup(tape.parameter(*e.table), ids);
}

Expr embed_factored(Tape& tape, std::span<const Embedding> factors, const std::vector<std::vector<int>>& ids) {
  if (factors.empty() || factors.size() != ids.size()) {
    throw ShapeError("embed_factored: " + std::to_string(factors.size()) + " factor tables but " +
                     std::to_string(ids.size()) + " id lists");
  }
  std::vector<Expr> parts;
  for (std::size_t f = 0; f < factors.size(); ++f) {
    if (factors[f].dim() != factors[0].dim()) throw ShapeError("embed_factored: factor dimensions differ");
    parts.push_back(embed(tape, factors[f], ids[f]));
  }
  return add_n(parts);
}

// Feed-forward --------------------------------------------------------------------

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, std::size_t in,
                              std::size_t out, Activation act, InitKind kind, Rng& rng) {
  FeedForward ff;
  ff.w = &params.add(name + ".W", init_weights({out, in}, kind, rng));
  ff.b = &params.add(name + ".b", init_weights({out}, InitKind::kBias, rng));
  ff.activation = act;
  return ff;
}

Expr ff_apply(Tape& tape, const FeedForward& ff, Expr x) {
  return activate(ff.activation, linear(x, tape.parameter(*ff.w), tape.parameter(*ff.b)));
}

Expr dropout_apply(Expr x, const DropoutSpec& spec, bool training) {
  if (!training || spec.rate == 0.0f) return x;
  if (!spec.rng) throw StateError("dropout needs a random generator while training");
  return dropout(x, spec.rate, *spec.rng, training);
}

// Recurrent cells -------------------------------------------------------------------

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::kRnn: return "rnn";
    case CellKind::kLstm: return "lstm";
    case CellKind::kGru: return "gru";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "rnn") return CellKind::kRnn;
  if (name == "lstm") return CellKind::kLstm;
  if (name == "gru") return CellKind::kGru;
  throw ConfigError("unknown cell kind '" + std::string(name) + "'");
}

namespace {

constexpr std::string_view kGates[] = {"input", "forget", "output"};

}  // namespace

RecurrentCell::RecurrentCell(ParameterSet& params, const std::string& prefix, CellKind kind,
                             std::size_t input_size, std::size_t hidden_size, Rng& rng, bool gru_fold_bias)
    : kind_(kind), input_size_(input_size), hidden_size_(hidden_size), gru_fold_bias_(gru_fold_bias) {
  if (hidden_size == 0) throw ShapeError("recurrent cell needs a positive hidden size");
  const std::size_t d = hidden_size;
  auto add = [&](const std::string& local, Shape shape, InitKind init) {
    params_[local] = &params.add(prefix + "." + local, init_weights(shape, init, rng));
  };
  // One affine group: input matrix (if any), recurrent matrix, bias.
  auto group = [&](const std::string& w, const std::string& u, const std::string& b) {
    if (input_size > 0) add(w, {d, input_size}, InitKind::kHidden);
    add(u, {d, d}, InitKind::kHidden);
    if (!b.empty()) add(b, {d}, InitKind::kBias);
  };
  switch (kind) {
    case CellKind::kRnn:
      group("W", "U", "b");
      break;
    case CellKind::kLstm:
      group("Wx", "Wh", "b");
      for (auto gate : kGates) {
        const std::string g(gate);
        group("Wx_" + g, "Wh_" + g, "b_" + g);
        add("Wm_" + g, {d, d}, InitKind::kHidden);
      }
      break;
    case CellKind::kGru:
      group("Wz", "Uz", "bz");
      group("Wr", "Ur", "br");
      group("W", "U", "");
      add("b", {d}, InitKind::kBias);
      break;
  }
}

const Parameter& RecurrentCell::param(std::string_view local) const {
  auto it = params_.find(local);
  if (it == params_.end()) throw RangeError("cell has no parameter '" + std::string(local) + "'");
  return *it->second;
}

Expr RecurrentCell::affine(Tape& tape, Expr x, Expr h, std::string_view w, std::string_view u,
                           std::string_view b) const {
  Expr acc = linear(h, tape.parameter(param(u)));
  if (input_size_ > 0) acc = add(linear(x, tape.parameter(param(w))), acc);
  if (!b.empty()) acc = add(acc, tape.parameter(param(b)));
  return acc;
}

CellState RecurrentCell::zero_state(Tape& tape, std::size_t batch) const {
  CellState s;
  s.h = tape.constant(Tensor({batch, hidden_size_}, 0.0f));
  if (kind_ == CellKind::kLstm) s.m = tape.constant(Tensor({batch, hidden_size_}, 0.0f));
  return s;
}

CellState RecurrentCell::step(Tape& tape, Expr x, const CellState& prev) const {
  if (input_size_ > 0 && (!x.valid() || x.shape().back() != input_size_)) {
    throw ShapeError("recurrent cell expects input width " + std::to_string(input_size_));
  }
  if (prev.h.shape().back() != hidden_size_) throw ShapeError("recurrent cell state width mismatch");
  switch (kind_) {
    case CellKind::kRnn:
      return {tanh(affine(tape, x, prev.h, "W", "U", "b")), {}};
    case CellKind::kLstm: {
      if (!prev.m.valid()) throw StateError("LSTM step without memory state");
      Expr input = tanh(affine(tape, x, prev.h, "Wx", "Wh", "b"));
      Expr gates[3];
      for (int k = 0; k < 3; ++k) {
        const std::string g(kGates[k]);
        Expr pre = add(affine(tape, x, prev.h, "Wx_" + g, "Wh_" + g, "b_" + g),
                       linear(prev.m, tape.parameter(param("Wm_" + g))));
        gates[k] = sigmoid(pre);
      }
      Expr memory = add(mul(gates[0], input), mul(gates[1], prev.m));
      Expr h = tanh(mul(gates[2], memory));
      return {h, memory};
    }
    case CellKind::kGru: {
      Expr z = sigmoid(affine(tape, x, prev.h, "Wz", "Uz", "bz"));
      Expr r = sigmoid(affine(tape, x, prev.h, "Wr", "Ur", "br"));
      Expr pre = linear(mul(r, prev.h), tape.parameter(param("U")));
      if (input_size_ > 0) pre = add(linear(x, tape.parameter(param("W"))), pre);
      Expr bias = tape.parameter(param("b"));
      if (gru_fold_bias_) pre = add(pre, bias);
      Expr comb = tanh(pre);
      Expr s = add(mul(one_minus(z), prev.h), mul(z, comb));
      if (!gru_fold_bias_) s = add(s, bias);
      return {s, {}};
    }
  }
  throw StateError("unknown cell kind");
}

// Stacks --------------------------------------------------------------------------

std::string_view to_string(DeepMode mode) {
  return mode == DeepMode::kStacked ? "stacked" : "transition";
}

DeepMode parse_deep_mode(std::string_view name) {
  if (name == "stacked") return DeepMode::kStacked;
  if (name == "transition") return DeepMode::kTransition;
  throw ConfigError("unknown deep mode '" + std::string(name) + "'");
}

RecurrentStack::RecurrentStack(ParameterSet& params, const std::string& prefix, CellKind kind, DeepMode mode,
                               std::size_t depth, std::size_t input_size, std::size_t hidden_size, Rng& rng,
                               bool gru_fold_bias)
    : mode_(mode) {
  if (depth == 0) throw ConfigError("recurrent stack depth must be at least 1");
  for (std::size_t i = 0; i < depth; ++i) {
    std::size_t in = input_size;
    if (i > 0) in = mode == DeepMode::kStacked ? hidden_size : 0;
    const std::string name = depth == 1 ? prefix : prefix + ".l" + std::to_string(i);
    cells_.emplace_back(params, name, kind, in, hidden_size, rng, gru_fold_bias);
  }
}

RecurrentStack::State RecurrentStack::zero_state(Tape& tape, std::size_t batch) const {
  const std::size_t n = mode_ == DeepMode::kStacked ? cells_.size() : 1;
  State s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(cells_[i].zero_state(tape, batch));
  return s;
}

RecurrentStack::State RecurrentStack::step(Tape& tape, Expr x, const State& prev) const {
  if (mode_ == DeepMode::kStacked) {
    if (prev.size() != cells_.size()) throw ShapeError("stacked state depth mismatch");
    State next;
    Expr in = x;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      next.push_back(cells_[i].step(tape, in, prev[i]));
      in = next.back().h;
    }
    return next;
  }
  if (prev.size() != 1) throw ShapeError("transition state must have one entry");
  CellState v = cells_[0].step(tape, x, prev[0]);
  for (std::size_t i = 1; i < cells_.size(); ++i) v = cells_[i].step(tape, {}, v);
  return {v};
}

CellState blend_state(const CellState& fresh, const CellState& old, const std::vector<float>& mask) {
  CellState s;
  s.h = blend_rows(fresh.h, old.h, mask);
  if (fresh.m.valid()) s.m = blend_rows(fresh.m, old.m, mask);
  return s;
}

RecurrentStack::State blend_state(const RecurrentStack::State& fresh, const RecurrentStack::State& old,
                                  const std::vector<float>& mask) {
  RecurrentStack::State s;
  for (std::size_t i = 0; i < fresh.size(); ++i) s.push_back(blend_state(fresh[i], old[i], mask));
  return s;
}

}  // namespace nmt
