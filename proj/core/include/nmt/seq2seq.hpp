// SPDX-License-Identifier: Apache-2.0
//
// Attention encoder-decoder translation model.
//
// Recurrent architectures: a bidirectional encoder produces annotations
// h_j = [←h_j; →h_j]. At output step i the decoder attends with its previous
// state s_{i−1}, predicts
//   t_i = softmax(W(U s_{i−1} + V E y_{i−1} + C c_i) + b)
// and then advances s_i = f(s_{i−1}, [E y_{i−1}; c_i]).
// Attention scores are a(s, h_j) = vᵀ tanh(W^a s + U^a h_j [+ V^a coverage(j)] + b^a).
//
// The self-attention architecture replaces both recurrent networks with
// stacks of self-attention layers and uses scaled dot-product attention
// from decoder to encoder. It has no positional information.
#pragma once

#include <cstddef>
#include <memory>
#include <string_view>
#include <utility>
#include <vector>

#include "nmt/data.hpp"
#include "nmt/graph.hpp"
#include "nmt/layers.hpp"

namespace nmt {

enum class Arch { kRnn, kLstm, kGru, kSelfAttn };
enum class EncoderMode { kStacked, kTransition, kAlternating };
enum class InitState { kBackward, kZeros };
enum class AlignCost { kCrossEntropy, kMse };

std::string_view to_string(Arch arch);
Arch parse_arch(std::string_view name);
std::string_view to_string(EncoderMode mode);
EncoderMode parse_encoder_mode(std::string_view name);
std::string_view to_string(InitState init);
InitState parse_init_state(std::string_view name);
std::string_view to_string(AlignCost cost);
AlignCost parse_align_cost(std::string_view name);

struct ModelConfig {
  Arch arch = Arch::kGru;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed = 16;
  /// Recurrent state width d; annotations are 2d wide. Unused by self-attention.
  std::size_t hidden = 32;
  /// Width of the additive attention's hidden layer.
  std::size_t attention = 32;
  std::size_t enc_depth = 1;
  std::size_t dec_depth = 1;
  EncoderMode enc_mode = EncoderMode::kStacked;
  DeepMode dec_mode = DeepMode::kStacked;
  /// Off: the decoder sees the fixed context [→h_J; ←h_1] at every step.
  bool use_attention = true;
  /// Feed accumulated attention into the attention scores.
  bool coverage = false;
  /// Normalise coverage by a learned fertility Φ_j = N σ(w·h_j).
  bool fertility = false;
  float fertility_cap = 3.0f;
  InitState init_state = InitState::kBackward;
  bool gru_fold_bias = false;
  float dropout = 0.0f;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  CellKind cell() const;
};

struct LossOptions {
  /// Weight λ of the guided alignment cost; 0 disables it.
  float align_weight = 0.0f;
  AlignCost align_cost = AlignCost::kCrossEntropy;
  bool training = false;
  Rng* rng = nullptr;
};

struct SequenceLoss {
  /// nll + λ·alignment
  Expr total;
  /// Σ over unmasked target positions of −log t_i[y_i]
  Expr nll;
  /// Guided alignment cost summed over sentences, if enabled.
  Expr alignment;
  std::size_t tokens = 0;
};

/// Source side of a batch, ready for attention.
struct Encoded {
  std::size_t batch = 0;
  std::size_t positions = 0;
  /// J annotations, each [B×2d] (recurrent) or [1×d] rows of `matrix` (self-attention).
  std::vector<Expr> annotations;
  /// U^a h_j, each [B×A].
  std::vector<Expr> keys;
  /// [B×J] validity of source positions.
  Tensor mask;
  std::vector<std::vector<float>> mask_columns;
  /// Φ [B×J] when fertility is enabled.
  Expr fertility;
  /// ←h_1 of the first encoder layer [B×d].
  Expr backward_first;
  /// [→h_J; ←h_1] for the attention-free decoder [B×2d].
  Expr summary;
  /// Self-attention encoder output [J×d].
  Expr matrix;
};

struct Attention {
  Expr alpha;    ///< [B×J]
  Expr context;  ///< [B×2d]
};

/// Coverage bookkeeping for one sentence during decoding.
struct CoverageState {
  Tensor coverage;   ///< [J]
  Tensor fertility;  ///< [J], ones without a fertility model

  explicit CoverageState(std::size_t positions);
  CoverageState(std::size_t positions, Tensor fertility);
};

/// coverage(j) += α_j / Φ_j
void coverage_update(CoverageState& state, std::span<const float> alpha);
/// (Σ_j max(0, coverage(j) − 1), Σ_j max(0, 1 − coverage(j)))
std::pair<double, double> coverage_penalties(const CoverageState& state);

/// N σ(w·h) for one annotation.
double fertility(std::span<const float> h, std::span<const float> w, double cap);

/// Guided alignment cost between given alignment weights A [I×J] and attention α [I×J]:
/// cross entropy −1/I Σ A log α, or mean squared 1/I Σ (A − α)² as a penalty.
Expr guided_alignment_cost(const Tensor& a, Expr alpha, AlignCost mode);

/// Row-weighted form: Σ_r w_r Σ_j f(A_rj, α_rj). Rows with weight 0 contribute nothing.
Expr weighted_alignment_cost(const Tensor& a, const std::vector<float>& row_weights, Expr alpha, AlignCost mode);

/// Alignment weights over model positions: target word t maps to row t, source
/// word s to column s+1 (after the start marker). The final row aligns the
/// end markers. Linked rows are uniform over their links; unlinked rows are zero.
Tensor alignment_matrix(const Alignment& links, std::size_t target_words, std::size_t source_words);

/// softmax(HHᵀ/√d) H; causal mode restricts row i to positions k ≤ i.
Expr self_attention(Expr h, bool causal);
/// softmax(S̃Hᵀ/√d) H + S̃. `alpha` receives the attention matrix when given.
Expr transformer_cross_attention(Expr s, Expr h, Expr* alpha = nullptr);

/// Parameters of one self-attention layer.
struct SelfAttentionLayer {
  const Parameter* w = nullptr;  ///< [d×d]
  const Parameter* b = nullptr;
  const Parameter* ln1_g = nullptr;
  const Parameter* ln1_b = nullptr;
  const Parameter* ln2_g = nullptr;
  const Parameter* ln2_b = nullptr;
  /// Decoder layers only: norm after cross-attention.
  const Parameter* ln3_g = nullptr;
  const Parameter* ln3_b = nullptr;
  bool causal = false;
};

/// Encoder layer: Ĥ = LN(SA(H) + H); out = LN(relu(W Ĥ + b) + Ĥ).
Expr self_attention_layer(Tape& tape, const SelfAttentionLayer& layer, Expr h);
/// Decoder layer: causal self-attention, cross-attention to `source`, feed-forward, each normalised.
Expr decoder_attention_layer(Tape& tape, const SelfAttentionLayer& layer, Expr s, Expr source, Expr* alpha = nullptr);

class DecodeSession;

class Seq2Seq {
 public:
  Seq2Seq(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Teacher-forced loss over a batch of wrapped pairs (see wrap_source, wrap_target).
  SequenceLoss sequence_loss(Tape& tape, const Batch& batch, const LossOptions& options = {}) const;

  // Recurrent building blocks, batched over rows.

  /// `ids` and `masks` hold one column per source position.
  Encoded encode(Tape& tape, const std::vector<std::vector<int>>& ids, const std::vector<std::vector<float>>& masks,
                 bool training = false, Rng* rng = nullptr) const;
  Attention attend(Tape& tape, Expr s_prev, const Encoded& enc, Expr coverage = {}) const;
  RecurrentStack::State initial_state(Tape& tape, const Encoded& enc) const;
  /// t_i from s_{i−1}, E y_{i−1} and c_i.
  Expr predict(Tape& tape, Expr s_prev, Expr y_prev_embedding, Expr context, bool training = false,
               Rng* rng = nullptr) const;
  /// s_i = f(s_{i−1}, [E y_{i−1}; c_i])
  RecurrentStack::State advance(Tape& tape, const RecurrentStack::State& s_prev, Expr y_prev_embedding,
                                Expr context) const;
  Expr embed_target(Tape& tape, const std::vector<int>& ids) const;

  // Self-attention building blocks, one sentence at a time.

  /// Encoder output [J×d] for a wrapped source.
  Expr encode_matrix(Tape& tape, const std::vector<int>& source) const;
  /// Distributions [T×V] for every prefix of `inputs` (y_0 … y_{T−1}).
  /// `alpha` receives the top layer's cross-attention [T×J] when given.
  Expr decode_matrix(Tape& tape, Expr source, const std::vector<int>& inputs, Expr* alpha = nullptr) const;

 private:
  friend class DecodeSession;

  struct Bidirectional {
    RecurrentStack forward;
    RecurrentStack backward;
  };

  void build_recurrent(Rng& rng);
  void build_self_attention(Rng& rng);
  SequenceLoss recurrent_loss(Tape& tape, const Batch& batch, const LossOptions& options) const;
  SequenceLoss self_attention_loss(Tape& tape, const Batch& batch, const LossOptions& options) const;
  Expr p(const Parameter* param, Tape& tape) const { return tape.parameter(*param); }

  ModelConfig config_;
  ParameterSet params_;
  Embedding src_embedding_;
  Embedding tgt_embedding_;

  // Recurrent architecture.
  std::vector<Bidirectional> bidirectional_;
  std::vector<std::pair<RecurrentStack, bool>> alternating_;  ///< (layer, runs right to left)
  RecurrentStack decoder_;
  const Parameter* init_w_ = nullptr;
  const Parameter* init_b_ = nullptr;
  const Parameter* att_w_ = nullptr;
  const Parameter* att_u_ = nullptr;
  const Parameter* att_b_ = nullptr;
  const Parameter* att_v_ = nullptr;
  const Parameter* att_cov_ = nullptr;
  const Parameter* fert_w_ = nullptr;
  const Parameter* pred_u_ = nullptr;
  const Parameter* pred_v_ = nullptr;
  const Parameter* pred_c_ = nullptr;

  // Self-attention architecture.
  std::vector<SelfAttentionLayer> enc_layers_;
  std::vector<SelfAttentionLayer> dec_layers_;

  const Parameter* out_w_ = nullptr;
  const Parameter* out_b_ = nullptr;
};

/// Decoder state of one hypothesis inside a DecodeSession.
struct DecoderState {
  RecurrentStack::State rnn;
  /// Accumulated attention (divided by fertility when enabled) [J].
  Tensor coverage;
  /// Self-attention decoders recompute from the prefix y_0 … y_{i−1}.
  std::vector<int> prefix;
};

struct StepResult {
  Tensor probs;  ///< [V]
  Tensor alpha;  ///< [J], empty without attention
  DecoderState next;
};

/// Inference over one source sentence. The source is encoded once; each
/// step() predicts the next-word distribution for a hypothesis state.
class DecodeSession {
 public:
  /// `source` holds plain ids; sentence markers are added here.
  DecodeSession(const Seq2Seq& model, const std::vector<int>& source);

  DecoderState initial();
  StepResult step(const DecoderState& state, int prev_token);

  std::size_t source_words() const { return source_words_; }
  std::size_t positions() const { return positions_; }
  /// Φ per position, or ones.
  const Tensor& fertility() const { return fertility_; }
  const Seq2Seq& model() const { return *model_; }

 private:
  const Seq2Seq* model_;
  std::unique_ptr<Tape> tape_;
  Encoded enc_;
  std::vector<int> source_;
  std::size_t source_words_ = 0;
  std::size_t positions_ = 0;
  Tensor fertility_;
};

}  // namespace nmt
