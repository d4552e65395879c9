// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/numerics/tape.hpp"

namespace tfs::num {

Tensor Tape::leaf(const Tensor& value) {
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = num_nodes();
  node_sizes_.push_back(t.size());
  grads_.emplace_back();
  return t;
}

Tensor Tape::make(Shape shape, DVec data) {
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = num_nodes();
  node_sizes_.push_back(t.size());
  grads_.emplace_back();
  return t;
}

Tensor Tape::alias(Shape shape, const Tensor& src) {
  Tensor t = src.aliased(std::move(shape));
  t.tape_ = this;
  t.node_ = num_nodes();
  node_sizes_.push_back(t.size());
  grads_.emplace_back();
  return t;
}

void Tape::record(std::function<void(Tape&)> backward) {
  records_.push_back(std::move(backward));
}

std::vector<double>& Tape::grad(int node) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty() && node_sizes_[static_cast<std::size_t>(node)] > 0) {
    g.assign(static_cast<std::size_t>(node_sizes_[static_cast<std::size_t>(node)]), 0.0);
  }
  return g;
}

const std::vector<double>* Tape::grad_if_any(int node) const {
  const auto& g = grads_[static_cast<std::size_t>(node)];
  return g.empty() ? nullptr : &g;
}

const std::vector<double>& Tape::grad_of(const Tensor& t) {
  if (!t.tracked() || t.tape() != this) throw Error("grad_of: tensor not tracked on this tape");
  return grad(t.node());
}

void Tape::accumulate(int node, const double* g, Index n) {
  auto& dst = grad(node);
  for (Index i = 0; i < n; ++i) dst[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
}

void Tape::backward(const Tensor& loss) {
  if (!loss.tracked() || loss.tape() != this) throw Error("backward: loss is not on this tape");
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  if (swept_) throw Error("backward: tape already swept");
  swept_ = true;
  grad(loss.node())[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    (*it)(*this);
  }
}

}  // namespace tfs::num
