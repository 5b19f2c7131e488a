// SPDX-License-Identifier: Apache-2.0
//
// Parameterised building blocks: embeddings, feed-forward layers, recurrent
// cells and stacks of them. Layers own no tensors; they hold references to
// entries of a ParameterSet and record operations onto a caller's Tape.
// Batched operands carry one row per sentence.
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nmt/graph.hpp"
#include "nmt/ops.hpp"

namespace nmt {

enum class InitKind {
  /// Uniform in ±1/√n with n the fan-in.
  kOutput,
  /// Uniform in ±√6/√(n_in + n_out).
  kHidden,
  /// All zeros.
  kBias,
};

/// Fresh tensor drawn per `kind`. Matrices are [out×in]; a vector counts
/// its length as the fan-in.
Tensor init_weights(const Shape& shape, InitKind kind, Rng& rng);

// Embeddings --------------------------------------------------------------------

struct Embedding {
  const Parameter* table = nullptr;  ///< [V×d]

  std::size_t vocab_size() const { return table->value.rows(); }
  std::size_t dim() const { return table->value.cols(); }
};

Embedding make_embedding(ParameterSet& params, const std::string& name, std::size_t vocab,
                         std::size_t dim, Rng& rng);

/// Row `id` of the table -> [d].
Expr embed(Tape& tape, const Embedding& e, int id);
/// One row per id -> [B×d].
Expr embed(Tape& tape, const Embedding& e, const std::vector<int>& ids);
/// Sum of per-factor embeddings. ids[f] holds the batch of ids for factor f.
Expr embed_factored(Tape& tape, std::span<const Embedding> factors,
                    const std::vector<std::vector<int>>& ids);

// Feed-forward --------------------------------------------------------------------

struct FeedForward {
  const Parameter* w = nullptr;  ///< [out×in]
  const Parameter* b = nullptr;  ///< [out]
  Activation activation = Activation::kTanh;
};

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, std::size_t in,
                              std::size_t out, Activation act, InitKind kind, Rng& rng);

/// act(W x + b)
Expr ff_apply(Tape& tape, const FeedForward& ff, Expr x);

// Dropout -------------------------------------------------------------------------

struct DropoutSpec {
  float rate = 0.0f;
  Rng* rng = nullptr;
};

Expr dropout_apply(Expr x, const DropoutSpec& spec, bool training);

// Recurrent cells -------------------------------------------------------------------

enum class CellKind { kRnn, kLstm, kGru };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

/// Hidden state, plus the memory state for LSTM cells.
struct CellState {
  Expr h;
  Expr m;
};

/// One recurrent layer.
///
///   rnn:  h = tanh(W x + U h' + b)
///   lstm: input = tanh(Wx x + Wh h' + b)
///         gate_a = σ(Wx_a x + Wh_a h' + Wm_a m' + b_a), a ∈ {input, forget, output}
///         m = gate_input·input + gate_forget·m';  h = tanh(gate_output·m)
///   gru:  z = σ(Wz x + Uz s' + bz);  r = σ(Wr x + Ur s' + br)
///         comb = tanh(W x + U(r∘s'));  s = (1−z)∘s' + z∘comb + b
///
/// With `gru_fold_bias` the GRU bias moves inside the combination instead.
/// A cell with input size 0 has no input terms; it transforms its state only.
class RecurrentCell {
 public:
  RecurrentCell() = default;
  RecurrentCell(ParameterSet& params, const std::string& prefix, CellKind kind,
                std::size_t input_size, std::size_t hidden_size, Rng& rng, bool gru_fold_bias = false);

  /// `x` is [B×in] (ignored when input_size is 0); states are [B×d].
  CellState step(Tape& tape, Expr x, const CellState& prev) const;
  CellState zero_state(Tape& tape, std::size_t batch) const;

  CellKind kind() const { return kind_; }
  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }
  bool gru_fold_bias() const { return gru_fold_bias_; }
  /// Parameter by its local name, e.g. "W", "Uz", "Wm_forget".
  const Parameter& param(std::string_view local) const;

 private:
  Expr affine(Tape& tape, Expr x, Expr h, std::string_view w, std::string_view u, std::string_view b) const;

  CellKind kind_ = CellKind::kRnn;
  std::size_t input_size_ = 0;
  std::size_t hidden_size_ = 0;
  bool gru_fold_bias_ = false;
  std::map<std::string, const Parameter*, std::less<>> params_;
};

enum class DeepMode {
  /// Every layer keeps its own state; layer i reads layer i−1 at the same step.
  kStacked,
  /// One state; the first layer reads the input and the previous top state,
  /// further layers only transform the state within the time step.
  kTransition,
};

std::string_view to_string(DeepMode mode);
DeepMode parse_deep_mode(std::string_view name);

/// A stack of recurrent cells. Depth 1 is exactly one cell in either mode.
class RecurrentStack {
 public:
  using State = std::vector<CellState>;

  RecurrentStack() = default;
  RecurrentStack(ParameterSet& params, const std::string& prefix, CellKind kind, DeepMode mode,
                 std::size_t depth, std::size_t input_size, std::size_t hidden_size, Rng& rng,
                 bool gru_fold_bias = false);

  State zero_state(Tape& tape, std::size_t batch) const;
  State step(Tape& tape, Expr x, const State& prev) const;
  /// The state exposed to the next layer or the output.
  static const CellState& top(const State& s) { return s.back(); }

  DeepMode mode() const { return mode_; }
  std::size_t depth() const { return cells_.size(); }
  std::size_t hidden_size() const { return cells_.front().hidden_size(); }
  const RecurrentCell& cell(std::size_t i) const { return cells_.at(i); }

 private:
  DeepMode mode_ = DeepMode::kStacked;
  std::vector<RecurrentCell> cells_;
};

/// Rows where mask == 0 keep their previous state (both h and m).
CellState blend_state(const CellState& fresh, const CellState& old, const std::vector<float>& mask);
RecurrentStack::State blend_state(const RecurrentStack::State& fresh, const RecurrentStack::State& old,
                                  const std::vector<float>& mask);

}  // namespace nmt
