// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tfsvit/common/rng.hpp"
#include "tfsvit/numerics/ops.hpp"
#include "tfsvit/vit/vit.hpp"

namespace tfs::style {

using num::Index;
using num::Shape;
using num::Tensor;

// Which patch tokens get their features replaced by stylized versions.
enum class Strategy { kAll, kRandom, kLowCls, kHighCls };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

enum class LayerPolicy { kRandom, kFixedPrefix };
std::string layer_policy_name(LayerPolicy p);
LayerPolicy layer_policy_from_name(const std::string& name);

struct StylizationConfig {
  double token_fraction = 0.5;  // d: fraction of patch tokens to replace
  int layers_per_step = 3;      // n: stylized layers per training iteration
  double beta_a = 0.1;
  double beta_b = 0.1;
  Strategy strategy = Strategy::kRandom;
  double eligible_fraction = 0.75;    // prefix of blocks whose outputs may be stylized
  std::optional<int> eligible_count;  // explicit override of the prefix length
  double eps = 1e-5;                  // variance-stabilizing constant inside the sqrt
  bool detach_stats = true;           // treat mu/sigma as constants in backward

  void validate(int depth) const;
};

// floor(eligible_fraction * depth) unless overridden; always validated >= 1.
int eligible_block_count(const StylizationConfig& cfg, int depth);

// D = max(1, round(d * s_patch)) for d > 0; exactly 0 when d == 0.
Index replacement_count(double d, Index s_patch);

// Per-sample per-channel statistics over patch tokens (CLS excluded).
// sigma = sqrt(population variance + eps), so sigma >= sqrt(eps).
struct TokenStats {
  Tensor mu;     // [B, C]
  Tensor sigma;  // [B, C]
};

// x is [B, S_total, C] with the CLS token at position 0. The result is
// tracked whenever x is tracked; pass x.detached() for constant stats.
TokenStats token_stats(const Tensor& x, double eps);

// One Beta(a, b) draw via Johnk's method; exact for a, b <= 1 and cheap at
// the shapes used here (acceptance ratio ~0.99 for a=b=0.1).
double sample_alpha(RngStream& stream, double a, double b);

// Mixed-statistics stylization across all patch tokens. alpha is [B].
//   gamma_mix = alpha * sigma(x) + (1-alpha) * sigma(other)
//   beta_mix  = alpha * mu(x)    + (1-alpha) * mu(other)
//   phi       = gamma_mix * (x - mu(x)) / sigma(x) + beta_mix
// The CLS column passes through unchanged.
Tensor stylize(const Tensor& x, const TokenStats& own, const TokenStats& other,
               const Tensor& alpha);

// Patch-token indices to replace (ascending). m_cls orders the CLS-attention
// strategies and is required for them; `stream` is consumed only by kRandom.
// Ties in m_cls break toward the lower token index.
std::vector<Index> select_tokens(Strategy strategy, double d, Index s_patch,
                                 const std::vector<double>* m_cls, RngStream* stream);

// n distinct block indices from the eligible prefix {0..eligible-1}.
std::vector<int> choose_layers(int n, int eligible, LayerPolicy policy, RngStream& stream);

struct LayerPlan {
  int block = 0;
  std::vector<Index> pairing;                  // batch permutation (fixed points allowed)
  std::vector<double> alpha;                   // per-sample mixing coefficients
  std::vector<std::vector<Index>> token_sets;  // per-sample patch indices; empty for
                                               // CLS strategies (resolved at apply time)
};

struct StylePlan {
  std::vector<LayerPlan> layers;  // ascending block order
  const LayerPlan* find(int block) const;
};

// Draws the full per-iteration plan: layer set, then per layer (ascending)
// the pairing permutation, per-sample alphas, and token sets where the
// strategy fixes them up front (Random/All). CLS strategies leave the sets
// empty; they resolve from the block's own attention at apply time.
StylePlan fresh_plan(const StylizationConfig& cfg, int depth, Index batch, Index s_patch,
                     LayerPolicy policy, RngStream& stream);

// The hook spliced into the ViT forward pass. One instance per training
// run; set_plan() re-arms it every iteration.
class Stylizer final : public vit::TokenHook {
 public:
  Stylizer(StylizationConfig cfg, int depth);

  const StylizationConfig& config() const { return cfg_; }
  void set_plan(StylePlan plan) { plan_ = std::move(plan); }
  void clear_plan() { plan_.layers.clear(); }
  const StylePlan& plan() const { return plan_; }

  bool armed(int block) const override;
  Tensor apply(int block, const Tensor& tokens, const vit::AttentionRecord& attention) override;

 private:
  StylizationConfig cfg_;
  int depth_;
  StylePlan plan_;
};

}  // namespace tfs::style
