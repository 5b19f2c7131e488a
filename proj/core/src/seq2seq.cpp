// SPDX-License-Identifier: Apache-2.0
#include "nmt/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nmt {

// Enumerations --------------------------------------------------------------------

std::string_view to_string(Arch arch) {
  switch (arch) {
    case Arch::kRnn: return "rnn";
    case Arch::kLstm: return "lstm";
    case Arch::kGru: return "gru";
    case Arch::kSelfAttn: return "selfattn";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  if (name == "rnn") return Arch::kRnn;
  if (name == "lstm") return Arch::kLstm;
  if (name == "gru") return Arch::kGru;
  if (name == "selfattn") return Arch::kSelfAttn;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

std::string_view to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::kStacked: return "stacked";
    case EncoderMode::kTransition: return "transition";
    case EncoderMode::kAlternating: return "alternating";
  }
  return "?";
}

EncoderMode parse_encoder_mode(std::string_view name) {
  if (name == "stacked") return EncoderMode::kStacked;
  if (name == "transition") return EncoderMode::kTransition;
  if (name == "alternating") return EncoderMode::kAlternating;
  throw ConfigError("unknown encoder mode '" + std::string(name) + "'");
}

std::string_view to_string(InitState init) { return init == InitState::kBackward ? "backward" : "zeros"; }

InitState parse_init_state(std::string_view name) {
  if (name == "backward") return InitState::kBackward;
  if (name == "zeros") return InitState::kZeros;
  throw ConfigError("unknown initial state '" + std::string(name) + "'");
}

std::string_view to_string(AlignCost cost) { return cost == AlignCost::kCrossEntropy ? "ce" : "mse"; }

AlignCost parse_align_cost(std::string_view name) {
  if (name == "ce") return AlignCost::kCrossEntropy;
  if (name == "mse") return AlignCost::kMse;
  throw ConfigError("unknown alignment cost '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (src_vocab < static_cast<std::size_t>(kReservedIds) || tgt_vocab < static_cast<std::size_t>(kReservedIds)) {
    fail("vocabularies must hold at least the four reserved tokens");
  }
  if (embed == 0 || hidden == 0 || attention == 0) fail("model dimensions must be positive");
  if (dec_depth == 0) fail("decoder depth must be at least 1");
  if (arch != Arch::kSelfAttn && enc_depth == 0) fail("recurrent encoder depth must be at least 1");
  if (dropout < 0.0f || dropout >= 1.0f) fail("dropout must be in [0,1)");
  if (fertility_cap <= 0.0f) fail("fertility cap must be positive");
  if (arch == Arch::kSelfAttn) {
    if (coverage || fertility) fail("coverage is only available for recurrent architectures");
    if (!use_attention) fail("the self-attention architecture always attends");
  }
  if (!use_attention && (coverage || fertility)) fail("coverage needs attention");
  if (fertility && !coverage) fail("fertility needs coverage");
}

CellKind ModelConfig::cell() const {
  switch (arch) {
    case Arch::kRnn: return CellKind::kRnn;
    case Arch::kLstm: return CellKind::kLstm;
    case Arch::kGru: return CellKind::kGru;
    case Arch::kSelfAttn: break;
  }
  throw ConfigError("self-attention models have no recurrent cell");
}

// Coverage, fertility, alignment ----------------------------------------------------------

CoverageState::CoverageState(std::size_t positions)
    : coverage({positions}, 0.0f), fertility({positions}, 1.0f) {}

CoverageState::CoverageState(std::size_t positions, Tensor fert) : coverage({positions}, 0.0f), fertility(std::move(fert)) {
  if (fertility.size() != positions) throw ShapeError("fertility length does not match positions");
}

void coverage_update(CoverageState& state, std::span<const float> alpha) {
  if (alpha.size() != state.coverage.size()) throw ShapeError("attention row length does not match coverage");
  for (std::size_t j = 0; j < alpha.size(); ++j) state.coverage[j] += alpha[j] / state.fertility[j];
}

std::pair<double, double> coverage_penalties(const CoverageState& state) {
  double over = 0.0;
  double under = 0.0;
  for (float c : state.coverage) {
    over += std::max(0.0, static_cast<double>(c) - 1.0);
    under += std::max(0.0, 1.0 - static_cast<double>(c));
  }
  return {over, under};
}

double fertility(std::span<const float> h, std::span<const float> w, double cap) {
  if (h.size() != w.size()) throw ShapeError("fertility weight width mismatch");
  if (cap <= 0.0) throw std::invalid_argument("fertility cap must be positive");
  double z = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) z += static_cast<double>(h[i]) * w[i];
  return cap / (1.0 + std::exp(-z));
}

Expr weighted_alignment_cost(const Tensor& a, const std::vector<float>& row_weights, Expr alpha, AlignCost mode) {
  require_same_shape(a, alpha.value(), "alignment cost");
  if (row_weights.size() != a.rows()) throw ShapeError("alignment cost: one weight per row");
  Tape& tape = alpha.tape();
  Tensor w(a.shape());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (auto& x : w.row(r)) x = row_weights[r];
  if (mode == AlignCost::kCrossEntropy) {
    return scale(sum(mul(tape.constant(nmt::mul(a, w)), log(alpha))), -1.0f);
  }
  return sum(mul(tape.constant(w), square(sub(alpha, tape.constant(a)))));
}

Expr guided_alignment_cost(const Tensor& a, Expr alpha, AlignCost mode) {
  const float inv = 1.0f / static_cast<float>(a.rows());
  return weighted_alignment_cost(a, std::vector<float>(a.rows(), inv), alpha, mode);
}

Tensor alignment_matrix(const Alignment& links, std::size_t target_words, std::size_t source_words) {
  const std::size_t rows = target_words + 1;
  const std::size_t cols = source_words + 2;
  Tensor a({rows, cols}, 0.0f);
  std::vector<std::vector<std::size_t>> linked(rows);
  for (auto [t, s] : links) {
    if (t < 0 || s < 0 || static_cast<std::size_t>(t) >= target_words || static_cast<std::size_t>(s) >= source_words) {
      throw DataError("alignment link " + std::to_string(s) + "-" + std::to_string(t) + " outside the sentence pair");
    }
    linked[t].push_back(static_cast<std::size_t>(s) + 1);
  }
  linked[target_words].push_back(cols - 1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto j : linked[i]) a(i, j) += 1.0f / static_cast<float>(linked[i].size());
  }
  return a;
}

// Self-attention ------------------------------------------------------------------

namespace {

Tensor causal_mask(std::size_t t) {
  Tensor m({t, t}, 0.0f);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k <= i; ++k) m(i, k) = 1.0f;
  return m;
}

}  // namespace

Expr self_attention(Expr h, bool causal) {
  if (h.shape().size() != 2) throw ShapeError("self_attention expects a [T×d] matrix");
  const float inv = 1.0f / std::sqrt(static_cast<float>(h.shape()[1]));
  Expr scores = scale(matmul_nt(h, h), inv);
  Expr alpha = causal ? masked_softmax(scores, causal_mask(h.shape()[0])) : softmax(scores);
  return matmul(alpha, h);
}

Expr transformer_cross_attention(Expr s, Expr h, Expr* alpha) {
  if (s.shape().size() != 2 || h.shape().size() != 2 || s.shape()[1] != h.shape()[1]) {
    throw ShapeError("cross attention expects [I×d] and [J×d]");
  }
  const float inv = 1.0f / std::sqrt(static_cast<float>(h.shape()[1]));
  Expr a = softmax(scale(matmul_nt(s, h), inv));
  if (alpha) *alpha = a;
  return add(matmul(a, h), s);
}

Expr self_attention_layer(Tape& tape, const SelfAttentionLayer& layer, Expr h) {
  Expr h1 = layer_norm(add(self_attention(h, layer.causal), h), tape.parameter(*layer.ln1_g), tape.parameter(*layer.ln1_b));
  Expr ff = relu(linear(h1, tape.parameter(*layer.w), tape.parameter(*layer.b)));
  return layer_norm(add(ff, h1), tape.parameter(*layer.ln2_g), tape.parameter(*layer.ln2_b));
}

Expr decoder_attention_layer(Tape& tape, const SelfAttentionLayer& layer, Expr s, Expr source, Expr* alpha) {
  Expr s1 = layer_norm(add(self_attention(s, true), s), tape.parameter(*layer.ln1_g), tape.parameter(*layer.ln1_b));
  Expr s2 = layer_norm(transformer_cross_attention(s1, source, alpha), tape.parameter(*layer.ln3_g),
                       tape.parameter(*layer.ln3_b));
  Expr ff = relu(linear(s2, tape.parameter(*layer.w), tape.parameter(*layer.b)));
  return layer_norm(add(ff, s2), tape.parameter(*layer.ln2_g), tape.parameter(*layer.ln2_b));
}

// Construction --------------------------------------------------------------------

Seq2Seq::Seq2Seq(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  src_embedding_ = make_embedding(params_, "enc.emb", config.src_vocab, config.embed, rng);
  tgt_embedding_ = make_embedding(params_, "dec.emb", config.tgt_vocab, config.embed, rng);
  if (config.arch == Arch::kSelfAttn) {
    build_self_attention(rng);
  } else {
    build_recurrent(rng);
  }
}

void Seq2Seq::build_recurrent(Rng& rng) {
  const auto& c = config_;
  const std::size_t d = c.hidden;
  const std::size_t e = c.embed;
  const std::size_t a = c.attention;
  const CellKind kind = c.cell();
  auto add = [&](const std::string& name, Shape shape, InitKind init) {
    return &params_.add(name, init_weights(shape, init, rng));
  };
  auto bidirectional = [&](const std::string& prefix, DeepMode mode, std::size_t depth, std::size_t input) {
    Bidirectional layer;
    layer.forward = RecurrentStack(params_, prefix + ".fwd", kind, mode, depth, input, d, rng, c.gru_fold_bias);
    layer.backward = RecurrentStack(params_, prefix + ".bwd", kind, mode, depth, input, d, rng, c.gru_fold_bias);
    return layer;
  };

  switch (c.enc_mode) {
    case EncoderMode::kTransition:
      bidirectional_.push_back(bidirectional("enc", DeepMode::kTransition, c.enc_depth, e));
      break;
    case EncoderMode::kStacked:
      for (std::size_t i = 0; i < c.enc_depth; ++i) {
        const std::string prefix = c.enc_depth == 1 ? "enc" : "enc.l" + std::to_string(i);
        bidirectional_.push_back(bidirectional(prefix, DeepMode::kStacked, 1, i == 0 ? e : 2 * d));
      }
      break;
    case EncoderMode::kAlternating:
      bidirectional_.push_back(bidirectional(c.enc_depth == 1 ? "enc" : "enc.l0", DeepMode::kStacked, 1, e));
      for (std::size_t i = 1; i < c.enc_depth; ++i) {
        // Layer 2 reads left context, layer 3 right context, and so on.
        const bool right_to_left = i % 2 == 0;
        alternating_.emplace_back(RecurrentStack(params_, "enc.l" + std::to_string(i), kind, DeepMode::kStacked, 1,
                                                 2 * d, 2 * d, rng, c.gru_fold_bias),
                                  right_to_left);
      }
      break;
  }

  if (c.init_state == InitState::kBackward) {
    init_w_ = add("dec.init.W", {d, d}, InitKind::kHidden);
    init_b_ = add("dec.init.b", {d}, InitKind::kBias);
  }
  if (c.use_attention) {
    att_w_ = add("att.W", {a, d}, InitKind::kHidden);
    att_u_ = add("att.U", {a, 2 * d}, InitKind::kHidden);
    att_b_ = add("att.b", {a}, InitKind::kBias);
    att_v_ = add("att.v", {a}, InitKind::kOutput);
    if (c.coverage) att_cov_ = add("att.V", {a}, InitKind::kOutput);
    if (c.fertility) fert_w_ = add("att.fertility", {1, 2 * d}, InitKind::kOutput);
  }
  decoder_ = RecurrentStack(params_, "dec.rnn", kind, c.dec_mode, c.dec_depth, e + 2 * d, d, rng, c.gru_fold_bias);
  pred_u_ = add("out.U", {d, d}, InitKind::kHidden);
  pred_v_ = add("out.V", {d, e}, InitKind::kHidden);
  pred_c_ = add("out.C", {d, 2 * d}, InitKind::kHidden);
  out_w_ = add("out.W", {c.tgt_vocab, d}, InitKind::kOutput);
  out_b_ = add("out.b", {c.tgt_vocab}, InitKind::kBias);
}

void Seq2Seq::build_self_attention(Rng& rng) {
  const std::size_t d = config_.embed;
  auto layer = [&](const std::string& prefix, bool decoder) {
    SelfAttentionLayer l;
    l.w = &params_.add(prefix + ".W", init_weights({d, d}, InitKind::kHidden, rng));
    l.b = &params_.add(prefix + ".b", Tensor({d}, 0.0f));
    l.ln1_g = &params_.add(prefix + ".ln1.g", Tensor({d}, 1.0f));
    l.ln1_b = &params_.add(prefix + ".ln1.b", Tensor({d}, 0.0f));
    l.ln2_g = &params_.add(prefix + ".ln2.g", Tensor({d}, 1.0f));
    l.ln2_b = &params_.add(prefix + ".ln2.b", Tensor({d}, 0.0f));
    if (decoder) {
      l.ln3_g = &params_.add(prefix + ".ln3.g", Tensor({d}, 1.0f));
      l.ln3_b = &params_.add(prefix + ".ln3.b", Tensor({d}, 0.0f));
      l.causal = true;
    }
    return l;
  };
  for (std::size_t i = 0; i < config_.enc_depth; ++i) enc_layers_.push_back(layer("enc.sa" + std::to_string(i), false));
  for (std::size_t i = 0; i < config_.dec_depth; ++i) dec_layers_.push_back(layer("dec.sa" + std::to_string(i), true));
  out_w_ = &params_.add("out.W", init_weights({config_.tgt_vocab, d}, InitKind::kOutput, rng));
  out_b_ = &params_.add("out.b", Tensor({config_.tgt_vocab}, 0.0f));
}

// Recurrent building blocks ------------------------------------------------------------

namespace {

bool row_linked(const Tensor& a, std::size_t i) {
  auto r = a.row(i);
  return std::any_of(r.begin(), r.end(), [](float v) { return v > 0.0f; });
}

std::size_t linked_rows(const Tensor& a) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) n += row_linked(a, i) ? 1 : 0;
  return n;
}

std::vector<Expr> run_direction(Tape& tape, const RecurrentStack& stack, const std::vector<Expr>& inputs,
                                const std::vector<std::vector<float>>& masks, bool reverse, std::size_t batch) {
  const std::size_t n = inputs.size();
  std::vector<Expr> out(n);
  auto state = stack.zero_state(tape, batch);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = reverse ? n - 1 - k : k;
    state = blend_state(stack.step(tape, inputs[j], state), state, masks[j]);
    out[j] = RecurrentStack::top(state).h;
  }
  return out;
}

}  // namespace

Expr Seq2Seq::embed_target(Tape& tape, const std::vector<int>& ids) const { return embed(tape, tgt_embedding_, ids); }

Encoded Seq2Seq::encode(Tape& tape, const std::vector<std::vector<int>>& ids,
                        const std::vector<std::vector<float>>& masks, bool training, Rng* rng) const {
  if (config_.arch == Arch::kSelfAttn) throw StateError("encode() is for recurrent architectures");
  if (ids.empty()) throw ShapeError("cannot encode an empty source");
  if (masks.size() != ids.size()) throw ShapeError("one mask column per source position");
  const DropoutSpec drop{config_.dropout, rng};
  Encoded enc;
  enc.batch = ids.front().size();
  enc.positions = ids.size();
  enc.mask_columns = masks;
  enc.mask = Tensor({enc.batch, enc.positions});
  for (std::size_t j = 0; j < enc.positions; ++j) {
    if (ids[j].size() != enc.batch || masks[j].size() != enc.batch) throw ShapeError("ragged source columns");
    for (std::size_t b = 0; b < enc.batch; ++b) enc.mask(b, j) = masks[j][b];
  }

  std::vector<Expr> inputs;
  for (const auto& col : ids) inputs.push_back(dropout_apply(embed(tape, src_embedding_, col), drop, training));

  std::vector<Expr> ann;
  for (std::size_t layer = 0; layer < bidirectional_.size(); ++layer) {
    const auto& bi = bidirectional_[layer];
    auto fwd = run_direction(tape, bi.forward, inputs, masks, false, enc.batch);
    auto bwd = run_direction(tape, bi.backward, inputs, masks, true, enc.batch);
    if (layer == 0) {
      enc.backward_first = bwd.front();
      enc.summary = concat({fwd.back(), bwd.front()});
    }
    ann.clear();
    for (std::size_t j = 0; j < enc.positions; ++j) ann.push_back(concat({bwd[j], fwd[j]}));
    inputs = ann;
  }
  for (const auto& [stack, right_to_left] : alternating_) {
    ann = run_direction(tape, stack, inputs, masks, right_to_left, enc.batch);
    inputs = ann;
  }
  enc.annotations = std::move(ann);

  if (config_.use_attention) {
    Expr u = p(att_u_, tape);
    for (const auto& h : enc.annotations) enc.keys.push_back(linear(h, u));
    if (config_.fertility) {
      std::vector<Expr> cols;
      Expr w = p(fert_w_, tape);
      for (const auto& h : enc.annotations) cols.push_back(column(linear(h, w), 0));
      enc.fertility = scale(sigmoid(stack_columns(cols)), config_.fertility_cap);
    }
  }
  return enc;
}

Attention Seq2Seq::attend(Tape& tape, Expr s_prev, const Encoded& enc, Expr coverage) const {
  if (!config_.use_attention) throw StateError("model was built without attention");
  Expr query = linear(s_prev, p(att_w_, tape), p(att_b_, tape));
  Expr scores = config_.coverage && coverage.valid()
                    ? additive_scores(query, enc.keys, p(att_v_, tape), coverage, p(att_cov_, tape))
                    : additive_scores(query, enc.keys, p(att_v_, tape));
  Attention att;
  att.alpha = masked_softmax(scores, enc.mask);
  att.context = weighted_sum(att.alpha, enc.annotations);
  return att;
}

RecurrentStack::State Seq2Seq::initial_state(Tape& tape, const Encoded& enc) const {
  auto state = decoder_.zero_state(tape, enc.batch);
  if (config_.init_state == InitState::kBackward) {
    Expr s0 = tanh(linear(enc.backward_first, p(init_w_, tape), p(init_b_, tape)));
    for (auto& layer : state) layer.h = s0;
  }
  return state;
}

Expr Seq2Seq::predict(Tape& tape, Expr s_prev, Expr y_prev_embedding, Expr context, bool training, Rng* rng) const {
  Expr pre = add_n({linear(s_prev, p(pred_u_, tape)), linear(y_prev_embedding, p(pred_v_, tape)),
                    linear(context, p(pred_c_, tape))});
  pre = dropout_apply(pre, DropoutSpec{config_.dropout, rng}, training);
  return softmax(linear(pre, p(out_w_, tape), p(out_b_, tape)));
}

RecurrentStack::State Seq2Seq::advance(Tape& tape, const RecurrentStack::State& s_prev, Expr y_prev_embedding,
                                       Expr context) const {
  return decoder_.step(tape, concat({y_prev_embedding, context}), s_prev);
}

// Self-attention building blocks ----------------------------------------------------------

Expr Seq2Seq::encode_matrix(Tape& tape, const std::vector<int>& source) const {
  if (config_.arch != Arch::kSelfAttn) throw StateError("encode_matrix() is for the self-attention architecture");
  if (source.empty()) throw ShapeError("cannot encode an empty source");
  Expr h = embed(tape, src_embedding_, source);
  for (const auto& layer : enc_layers_) h = self_attention_layer(tape, layer, h);
  return h;
}

Expr Seq2Seq::decode_matrix(Tape& tape, Expr source, const std::vector<int>& inputs, Expr* alpha) const {
  if (config_.arch != Arch::kSelfAttn) throw StateError("decode_matrix() is for the self-attention architecture");
  if (inputs.empty()) throw ShapeError("decoder needs at least the start marker");
  Expr s = embed(tape, tgt_embedding_, inputs);
  for (std::size_t k = 0; k < dec_layers_.size(); ++k) {
    s = decoder_attention_layer(tape, dec_layers_[k], s, source, k + 1 == dec_layers_.size() ? alpha : nullptr);
  }
  return softmax(linear(s, p(out_w_, tape), p(out_b_, tape)));
}

// Losses ----------------------------------------------------------------------------

SequenceLoss Seq2Seq::sequence_loss(Tape& tape, const Batch& batch, const LossOptions& options) const {
  if (batch.size == 0) throw ShapeError("empty batch");
  for (std::size_t b = 0; b < batch.size; ++b) {
    if (batch.target_row(b).empty()) throw ShapeError("batch row " + std::to_string(b) + " has no target tokens");
  }
  if (options.training && config_.dropout > 0.0f && !options.rng) throw StateError("dropout needs a random generator");
  SequenceLoss loss = config_.arch == Arch::kSelfAttn ? self_attention_loss(tape, batch, options)
                                                      : recurrent_loss(tape, batch, options);
  loss.tokens = static_cast<std::size_t>(std::accumulate(batch.target_mask.begin(), batch.target_mask.end(), 0.0));
  loss.total = loss.nll;
  if (loss.alignment.valid()) loss.total = add(loss.nll, scale(loss.alignment, options.align_weight));
  return loss;
}

SequenceLoss Seq2Seq::recurrent_loss(Tape& tape, const Batch& batch, const LossOptions& options) const {
  const std::size_t B = batch.size;
  std::vector<std::vector<int>> src_cols;
  std::vector<std::vector<float>> src_masks;
  for (std::size_t j = 0; j < batch.source_len; ++j) {
    src_cols.push_back(batch.source_column(j));
    src_masks.push_back(batch.source_mask_column(j));
  }
  Encoded enc = encode(tape, src_cols, src_masks, options.training, options.rng);
  const std::size_t J = enc.positions;

  const bool guided = options.align_weight > 0.0f && config_.use_attention;
  std::vector<Tensor> targets;
  std::vector<float> inv_rows(B, 0.0f);
  if (guided) {
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t tw = batch.target_row(b).size() - 1;
      const std::size_t sw = batch.source_row(b).size() - 2;
      targets.push_back(alignment_matrix(batch.alignments.at(b), tw, sw));
      inv_rows[b] = 1.0f / static_cast<float>(linked_rows(targets.back()));
    }
  }

  auto state = initial_state(tape, enc);
  Expr coverage;
  if (config_.coverage) coverage = tape.constant(Tensor({B, J}, 0.0f));
  std::vector<int> y_prev(B, kBosId);
  std::vector<Expr> nll_terms;
  std::vector<Expr> align_terms;
  for (std::size_t i = 0; i < batch.target_len; ++i) {
    Expr y_emb = dropout_apply(embed_target(tape, y_prev), DropoutSpec{config_.dropout, options.rng}, options.training);
    Expr s_prev = RecurrentStack::top(state).h;
    Expr context = enc.summary;
    Attention att;
    if (config_.use_attention) {
      att = attend(tape, s_prev, enc, coverage);
      context = att.context;
    }
    Expr probs = predict(tape, s_prev, y_emb, context, options.training, options.rng);
    const auto y = batch.target_column(i);
    const auto mask = batch.target_mask_column(i);
    nll_terms.push_back(nll_rows(probs, y, mask));

    if (guided) {
      Tensor a({B, J}, 0.0f);
      std::vector<float> weights(B, 0.0f);
      for (std::size_t b = 0; b < B; ++b) {
        const Tensor& tb = targets[b];
        if (i >= tb.rows() || !row_linked(tb, i)) continue;
        auto src = tb.row(i);
        std::copy(src.begin(), src.end(), a.row(b).begin());
        weights[b] = inv_rows[b];
      }
      if (std::any_of(weights.begin(), weights.end(), [](float w) { return w > 0.0f; })) {
        align_terms.push_back(weighted_alignment_cost(a, weights, att.alpha, options.align_cost));
      }
    }

    state = blend_state(advance(tape, state, y_emb, context), state, mask);
    if (config_.coverage) {
      Expr step = config_.fertility ? div(att.alpha, enc.fertility) : att.alpha;
      coverage = add(coverage, step);
    }
    y_prev = y;
  }

  SequenceLoss loss;
  loss.nll = add_n(nll_terms);
  if (!align_terms.empty()) loss.alignment = add_n(align_terms);
  return loss;
}

SequenceLoss Seq2Seq::self_attention_loss(Tape& tape, const Batch& batch, const LossOptions& options) const {
  std::vector<Expr> nll_terms;
  std::vector<Expr> align_terms;
  const bool guided = options.align_weight > 0.0f;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto src = batch.source_row(b);
    const auto tgt = batch.target_row(b);
    Expr h = encode_matrix(tape, src);
    std::vector<int> inputs{kBosId};
    inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
    Expr alpha;
    Expr probs = decode_matrix(tape, h, inputs, guided ? &alpha : nullptr);
    nll_terms.push_back(nll_rows(probs, tgt, std::vector<float>(tgt.size(), 1.0f)));
    if (guided) {
      Tensor a = alignment_matrix(batch.alignments.at(b), tgt.size() - 1, src.size() - 2);
      std::vector<float> weights(a.rows(), 0.0f);
      const float inv = 1.0f / static_cast<float>(linked_rows(a));
      for (std::size_t i = 0; i < a.rows(); ++i) {
        if (row_linked(a, i)) weights[i] = inv;
      }
      align_terms.push_back(weighted_alignment_cost(a, weights, alpha, options.align_cost));
    }
  }
  SequenceLoss loss;
  loss.nll = add_n(nll_terms);
  if (!align_terms.empty()) loss.alignment = add_n(align_terms);
  return loss;
}

// Decoding session ----------------------------------------------------------------------

DecodeSession::DecodeSession(const Seq2Seq& model, const std::vector<int>& source)
    : model_(&model), tape_(std::make_unique<Tape>()), source_(wrap_source(source)), source_words_(source.size()) {
  if (source.empty()) throw ShapeError("cannot decode an empty source sentence");
  positions_ = source_.size();
  fertility_ = Tensor({positions_}, 1.0f);
  if (model.config().arch == Arch::kSelfAttn) {
    enc_.matrix = model.encode_matrix(*tape_, source_);
    enc_.batch = 1;
    enc_.positions = positions_;
    return;
  }
  std::vector<std::vector<int>> cols;
  std::vector<std::vector<float>> masks;
  for (int id : source_) {
    cols.push_back({id});
    masks.push_back({1.0f});
  }
  enc_ = model.encode(*tape_, cols, masks);
  if (enc_.fertility.valid()) fertility_ = enc_.fertility.value().reshaped({positions_});
}

DecoderState DecodeSession::initial() {
  DecoderState s;
  s.coverage = Tensor({positions_}, 0.0f);
  if (model_->config().arch != Arch::kSelfAttn) s.rnn = model_->initial_state(*tape_, enc_);
  return s;
}

StepResult DecodeSession::step(const DecoderState& state, int prev_token) {
  const auto& cfg = model_->config();
  if (prev_token < 0 || static_cast<std::size_t>(prev_token) >= cfg.tgt_vocab) {
    throw RangeError("previous token id " + std::to_string(prev_token) + " outside the target vocabulary");
  }
  Tape& tape = *tape_;
  StepResult out;
  out.next = state;
  if (cfg.arch == Arch::kSelfAttn) {
    out.next.prefix.push_back(prev_token);
    Expr alpha;
    Expr probs = model_->decode_matrix(tape, enc_.matrix, out.next.prefix, &alpha);
    const std::size_t last = out.next.prefix.size() - 1;
    auto pr = probs.value().row(last);
    auto ar = alpha.value().row(last);
    out.probs = Tensor({pr.size()}, std::vector<float>(pr.begin(), pr.end()));
    out.alpha = Tensor({ar.size()}, std::vector<float>(ar.begin(), ar.end()));
  } else {
    Expr s_prev = RecurrentStack::top(state.rnn).h;
    Expr y_emb = model_->embed_target(tape, {prev_token});
    Expr context = enc_.summary;
    if (cfg.use_attention) {
      Expr coverage;
      if (cfg.coverage) coverage = tape.constant(state.coverage.reshaped({1, positions_}));
      Attention att = model_->attend(tape, s_prev, enc_, coverage);
      context = att.context;
      out.alpha = att.alpha.value().reshaped({positions_});
    }
    out.probs = model_->predict(tape, s_prev, y_emb, context).value().reshaped({cfg.tgt_vocab});
    out.next.rnn = model_->advance(tape, state.rnn, y_emb, context);
  }
  if (!out.alpha.empty()) {
    for (std::size_t j = 0; j < positions_; ++j) out.next.coverage[j] += out.alpha[j] / fertility_[j];
  }
  return out;
}

}  // namespace nmt
