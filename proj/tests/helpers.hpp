// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tfsvit/common/rng.hpp"
#include "tfsvit/numerics/ops.hpp"
#include "tfsvit/numerics/tape.hpp"
#include "tfsvit/numerics/tensor.hpp"
#include "tfsvit/vit/vit.hpp"

namespace tfs::test {

// Small backbone for gradient sweeps: 5 tokens, 16-dim, 2 blocks, 3 classes.
inline vit::ViTConfig tiny_vit_config() {
  vit::ViTConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.in_channels = 3;
  cfg.embed_dim = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.num_classes = 3;
  return cfg;
}

using num::Index;
using num::Shape;
using num::Tensor;

inline Tensor random_tensor(Shape shape, RngStream& rng, double lo = -2.0, double hi = 2.0) {
  Index n = num::shape_size(shape);
  num::DVec data(static_cast<std::size_t>(n));
  for (auto& v : data) v = lo + (hi - lo) * rng.uniform();
  return Tensor(std::move(shape), std::move(data));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  }
  return m;
}

// Central finite differences of a scalar function of one tensor's data.
inline std::vector<double> fd_gradient(const std::function<double(const Tensor&)>& f, Tensor x,
                                       double h = 1e-5) {
  std::vector<double> g(static_cast<std::size_t>(x.size()));
  double* p = x.mutable_data();
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double fp = f(x);
    p[i] = keep - h;
    const double fm = f(x);
    p[i] = keep;
    g[static_cast<std::size_t>(i)] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradCheck {
  double max_err = 0.0;
  Index failures = 0;
  Index total = 0;
};

// err_i = |a_i - fd_i| / max(1, |a_i|, |fd_i|); counts entries above tol.
inline GradCheck compare_gradients(const std::vector<double>& analytic,
                                   const std::vector<double>& fd, double tol = 1e-6) {
  GradCheck r;
  r.total = static_cast<Index>(analytic.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(fd[i])});
    const double err = std::fabs(analytic[i] - fd[i]) / denom;
    r.max_err = std::max(r.max_err, err);
    if (err > tol) ++r.failures;
  }
  return r;
}

// Deterministic scalar readout: sum of t weighted by a fixed pseudo-random
// pattern, so every output element receives a distinct upstream gradient.
inline Tensor weighted_readout(const Tensor& t, std::uint64_t salt = 7) {
  RngStream rng(salt, "readout");
  num::DVec w(static_cast<std::size_t>(t.size()));
  for (auto& v : w) v = -1.0 + 2.0 * rng.uniform();
  return num::sum_all(num::mul(t, Tensor(t.shape(), std::move(w))));
}

// Checks d(readout(op(x)))/dx against finite differences.
inline GradCheck check_unary_grad(const std::function<Tensor(const Tensor&)>& op, const Tensor& x0,
                                  double tol = 1e-6, std::uint64_t salt = 7) {
  num::Tape tape;
  Tensor x = tape.leaf(x0);
  Tensor loss = weighted_readout(op(x), salt);
  tape.backward(loss);
  const auto& analytic = tape.grad_of(x);
  Tensor probe(x0.shape(), num::DVec(x0.vec()));
  auto fd = fd_gradient(
      [&](const Tensor& xv) { return weighted_readout(op(xv), salt).item(); }, probe);
  return compare_gradients(analytic, fd, tol);
}

}  // namespace tfs::test
