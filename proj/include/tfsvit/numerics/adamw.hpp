// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "tfsvit/numerics/tensor.hpp"

namespace tfs::num {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay: the decay term is applied directly to
// the parameters (scaled by lr), never folded into the gradient moments.
struct AdamWState {
  std::vector<std::vector<double>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<double>> v;  // second moments
  long t = 0;                          // completed steps

  // Allocates zeroed moment buffers matching `params`.
  static AdamWState init(const std::vector<Tensor>& params);
};

// In-place update of every parameter buffer. `grads[i]` must match
// `params[i]` in length; params must be untracked leaves.
void adamw_step(std::vector<Tensor>& params, const std::vector<const std::vector<double>*>& grads,
                AdamWState& state, const AdamWConfig& config);

}  // namespace tfs::num
