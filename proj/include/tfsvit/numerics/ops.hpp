// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "tfsvit/numerics/tape.hpp"
#include "tfsvit/numerics/tensor.hpp"

// Free-function tensor operations. Every function computes its value
// eagerly and, when an input is tracked, records the matching backward rule
// on that input's tape. Reductions accumulate sequentially left-to-right so
// identical inputs give bit-identical outputs.
namespace tfs::num {

// Elementwise binary ops with numpy-style broadcasting (ranks are
// right-aligned, axes must match or be 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor sqrt_elem(const Tensor& x);

// GELU with the tanh approximation:
//   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);

// Batched matrix product a[..,m,k] x b[..,k,n] -> [..,m,n]. Batch extents
// broadcast (right-aligned; missing or 1 extents replicate).
Tensor matmul(const Tensor& a, const Tensor& b);

// x [.., m, k] -> matmul(x, w [k, n]) + bias [n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Max-subtracted softmax over the last axis; rows sum to 1.
Tensor softmax_rows(const Tensor& x);

// Per-vector normalization over the last axis (population variance), then
// elementwise affine with gamma/beta of shape [C]. eps > 0.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Reductions over one axis. Population divisor for var (divide by count).
Tensor mean_axis(const Tensor& x, int axis, bool keepdims);
Tensor var_axis(const Tensor& x, int axis, bool keepdims);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const Tensor& a, const Tensor& b, int axis);

// Token-axis (axis 1) gather/scatter on [B, S, C] tensors. Indices may be
// shared across the batch or given per sample; all must lie in [0, S).
Tensor gather_tokens(const Tensor& x, const std::vector<Index>& indices);
Tensor gather_tokens(const Tensor& x, const std::vector<std::vector<Index>>& indices);
// Replaces x[b, idx[b][j], :] with values[b, j, :]; indices must be
// distinct within a sample. Untouched positions pass through unchanged.
Tensor scatter_tokens(const Tensor& x, const std::vector<std::vector<Index>>& indices,
                      const Tensor& values);

// Batch-axis gather: out[r, ...] = x[rows[r], ...].
Tensor gather_rows(const Tensor& x, const std::vector<Index>& rows);

// Mean over the batch of softmax cross-entropy; logits [B, K].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace tfs::num
