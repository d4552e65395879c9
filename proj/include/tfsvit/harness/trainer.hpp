// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfsvit/harness/dataset.hpp"
#include "tfsvit/numerics/adamw.hpp"
#include "tfsvit/stylization/stylization.hpp"
#include "tfsvit/vit/vit.hpp"

namespace tfs::harness {

using data::Pool;
using num::Index;
using num::Tensor;

enum class Method { kErm, kTfs, kAtfs };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct TrainConfig {
  Method method = Method::kTfs;
  style::StylizationConfig stylization;
  style::LayerPolicy layer_policy = style::LayerPolicy::kRandom;
  Index batch_size = 32;
  double lr = 3e-4;
  double weight_decay = 0.05;
  long steps = 2000;
  long eval_every = 100;
  std::uint64_t seed = 0;
  vit::ViTConfig model;

  // The strategy actually trained with: ATFS forces HighCLS, ERM none.
  style::Strategy effective_strategy() const;
  void validate() const;
};

struct EvalPoint {
  long step = 0;
  double accuracy = 0.0;
};

struct RunRecord {
  std::vector<EvalPoint> val_curve;  // includes the step-0 baseline
  long best_val_step = 0;
  double best_val_acc = 0.0;
  double target_acc = 0.0;  // accuracy of the best-val weights on the target
  double wall_time_s = 0.0;
  long peak_rss_kb = 0;  // 0 when the platform cannot report it
};

struct TrainOutcome {
  vit::ViTModel model;  // restored to the best-validation weights
  RunRecord record;
};

// Runs the training loop: epoch-shuffled batches, a fresh stylization plan
// per iteration (methods other than ERM), AdamW updates, periodic
// validation, best-on-validation selection (ties keep the earliest step).
// Non-finite losses abort with a NumericError carrying the step index.
TrainOutcome train(const TrainConfig& cfg, const Pool& train_pool, const Pool& val_pool);

// Argmax accuracy in eval mode; deterministic (ties pick the lowest class).
double evaluate(const vit::ViTModel& model, const Pool& pool);

// Current process peak resident set size, or 0 when unavailable.
long peak_rss_kb();

}  // namespace tfs::harness
