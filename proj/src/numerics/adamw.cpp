// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/numerics/adamw.hpp"

#include <cmath>

namespace tfs::num {

AdamWState AdamWState::init(const std::vector<Tensor>& params) {
  AdamWState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    s.v.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
  return s;
}

void adamw_step(std::vector<Tensor>& params, const std::vector<const std::vector<double>*>& grads,
                AdamWState& state, const AdamWConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adamw_step: params/grads/state disagree in count");
  }
  if (config.lr < 0.0) throw ConfigError("adamw_step: lr must be >= 0");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].mutable_data();
    const std::size_t n = static_cast<std::size_t>(params[i].size());
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != n || (grads[i] && grads[i]->size() != n)) {
      throw ShapeError("adamw_step: buffer length mismatch for parameter " + std::to_string(i));
    }
    const double* g = grads[i] ? grads[i]->data() : nullptr;
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = g ? g[j] : 0.0;
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= config.lr * (mhat / (std::sqrt(vhat) + config.eps) + config.weight_decay * p[j]);
    }
  }
}

}  // namespace tfs::num
