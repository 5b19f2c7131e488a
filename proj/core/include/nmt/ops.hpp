// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations recorded onto a Tape. Batched operands are
// matrices with one row per batch element.
#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "nmt/graph.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

using Rng = std::mt19937_64;

/// Probability floor applied before taking logs.
inline constexpr float kProbabilityFloor = 1e-12f;

// Linear algebra -------------------------------------------------------------

/// Same shape conventions as the matmul kernel.
Expr matmul(Expr a, Expr b);
/// a·bᵀ
Expr matmul_nt(Expr a, Expr b);
Expr transpose(Expr a);

/// x·Wᵀ + b for batched x [B×in], or W·x + b for a vector x [in].
/// W is [out×in]; the bias may be an empty Expr.
Expr linear(Expr x, Expr w, Expr b = {});

// Elementwise -----------------------------------------------------------------

/// Same-shape sum, or matrix [m×n] + row vector [n] broadcast over rows.
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr scale(Expr a, float factor);
/// 1 − a
Expr one_minus(Expr a);
Expr square(Expr a);
Expr exp(Expr a);
/// log(max(a, floor))
Expr log(Expr a);
/// log σ(a), computed stably.
Expr log_sigmoid(Expr a);

Expr activate(Activation kind, Expr a);
Expr sigmoid(Expr a);
Expr tanh(Expr a);
Expr relu(Expr a);

/// Identity forward, zero gradient.
Expr stop_gradient(Expr a);

// Reductions and structure ----------------------------------------------------

/// Sum of all elements as a one-element tensor.
Expr sum(Expr a);
Expr add_n(const std::vector<Expr>& terms);
/// Row-wise dot product of two [B×n] matrices -> [B].
Expr row_dot(Expr a, Expr b);
/// Concatenation along the last axis.
Expr concat(const std::vector<Expr>& parts);
/// Column j of a matrix [B×n] -> [B].
Expr column(Expr a, std::size_t j);
/// Element k of a vector -> [1].
Expr element(Expr a, std::size_t k);
/// Stacks J vectors of length B into a [B×J] matrix.
Expr stack_columns(const std::vector<Expr>& columns);
/// Stacks T row vectors of length n (or [1×n] matrices) into [T×n].
Expr stack_rows(const std::vector<Expr>& rows);
/// Row r of a matrix -> [n].
Expr row(Expr a, std::size_t r);
/// a[b, :] * v[b] for a [B×n], v [B].
Expr scale_rows(Expr a, Expr v);
/// Per-row select: mask[b] != 0 picks fresh row b, otherwise old row b.
Expr blend_rows(Expr fresh, Expr old, const std::vector<float>& mask);
/// Per-row gather: out[b] = a[b, ids[b]] -> [B].
Expr pick(Expr a, const std::vector<int>& ids);
/// Row lookup into a table [V×d]: -> [B×d].
Expr lookup(Expr table, const std::vector<int>& ids);

// Normalisation ---------------------------------------------------------------

/// Softmax over a vector or each matrix row.
Expr softmax(Expr a);
/// Softmax where mask == 0 entries receive exactly zero probability.
/// The mask has the shape of `a`. Throws if a row is fully masked.
Expr masked_softmax(Expr a, const Tensor& mask);
/// log Σ exp per row -> [rows].
Expr log_sum_exp(Expr a);
Expr layer_norm(Expr s, Expr gain, Expr bias);

// Losses ----------------------------------------------------------------------

/// ½ Σ (t − y)²
Expr l2_loss(Expr y, Expr t);
/// −log p[k] on a probability vector.
Expr nll_loss(Expr p, int k);
/// Σ_b weight[b] · −log p[b, ids[b]] on a batch of probability rows.
Expr nll_rows(Expr p, const std::vector<int>& ids, const std::vector<float>& weights);

// Attention kernels -------------------------------------------------------------

/// Additive attention scores. `query` is [B×A] (projected decoder state),
/// `keys` holds J matrices [B×A] (projected annotations), `v` is [A].
/// Optional coverage [B×J] enters through `coverage_weight` [A].
/// Returns [B×J] with score(b,j) = v · tanh(query_b + key_j,b + cov_bj·cw).
Expr additive_scores(Expr query, const std::vector<Expr>& keys, Expr v, Expr coverage = {},
                     Expr coverage_weight = {});

/// Σ_j α[b,j] · values_j[b,:] for α [B×J] and J value matrices [B×n].
Expr weighted_sum(Expr alpha, const std::vector<Expr>& values);

// Regularisation ----------------------------------------------------------------

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// 1/(1−rate). Identity when not training or rate == 0.
Expr dropout(Expr a, float rate, Rng& rng, bool training);

}  // namespace nmt
