// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "tfsvit/numerics/tensor.hpp"

namespace tfs::num {

// Reverse-mode tape. Operations append records in creation order, which is
// a valid topological order for the reverse sweep. One tape is a
// single-threaded unit of work; gradients live in per-node buffers keyed by
// the node ids handed out here.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Track an existing (untracked) tensor as a leaf. Shares the buffer.
  Tensor leaf(const Tensor& value);

  // Create a tracked tensor owning fresh data.
  Tensor make(Shape shape, DVec data);

  // Tracked tensor sharing another tensor's buffer (reshape-style views).
  Tensor alias(Shape shape, const Tensor& src);

  // Append a backward rule. Rules run exactly once, in reverse order.
  void record(std::function<void(Tape&)> backward);

  // Reverse sweep from a scalar loss node. Seeds d(loss)/d(loss) = 1.
  void backward(const Tensor& loss);

  // Gradient buffer of a node; allocated zero-filled on first access.
  std::vector<double>& grad(int node);
  // Null when the node was never touched by the sweep (treated as zero).
  const std::vector<double>* grad_if_any(int node) const;
  const std::vector<double>& grad_of(const Tensor& t);

  // dst_node's gradient += g (elementwise over n values).
  void accumulate(int node, const double* g, Index n);

  int num_nodes() const { return static_cast<int>(node_sizes_.size()); }
  bool swept() const { return swept_; }

 private:
  std::vector<Index> node_sizes_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::function<void(Tape&)>> records_;
  bool swept_ = false;
};

}  // namespace tfs::num
