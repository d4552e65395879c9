// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/stylization/stylization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tfs::style {

using namespace tfs::num;

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kAll: return "All";
    case Strategy::kRandom: return "Random";
    case Strategy::kLowCls: return "LowCLS";
    case Strategy::kHighCls: return "HighCLS";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "All") return Strategy::kAll;
  if (name == "Random") return Strategy::kRandom;
  if (name == "LowCLS") return Strategy::kLowCls;
  if (name == "HighCLS") return Strategy::kHighCls;
  throw ConfigError("unknown token selection strategy '" + name +
                    "' (expected All|Random|LowCLS|HighCLS)");
}

std::string layer_policy_name(LayerPolicy p) {
  return p == LayerPolicy::kRandom ? "random" : "fixed_prefix";
}

LayerPolicy layer_policy_from_name(const std::string& name) {
  if (name == "random") return LayerPolicy::kRandom;
  if (name == "fixed_prefix") return LayerPolicy::kFixedPrefix;
  throw ConfigError("unknown layer policy '" + name + "' (expected random|fixed_prefix)");
}

void StylizationConfig::validate(int depth) const {
  if (token_fraction < 0.0 || token_fraction > 1.0) {
    throw ConfigError("stylization: d must lie in [0,1]");
  }
  if (beta_a <= 0.0 || beta_b <= 0.0) throw ConfigError("stylization: Beta shapes must be > 0");
  if (eps <= 0.0) throw ConfigError("stylization: eps must be > 0");
  const int eligible = eligible_block_count(*this, depth);
  if (layers_per_step < 1 || layers_per_step > eligible) {
    throw ConfigError("stylization: n = " + std::to_string(layers_per_step) +
                      " must lie in [1, eligible_count = " + std::to_string(eligible) + "]");
  }
}

int eligible_block_count(const StylizationConfig& cfg, int depth) {
  int eligible;
  if (cfg.eligible_count.has_value()) {
    eligible = *cfg.eligible_count;
  } else {
    if (cfg.eligible_fraction <= 0.0 || cfg.eligible_fraction > 1.0) {
      throw ConfigError("stylization: eligible_fraction must lie in (0,1]");
    }
    eligible = static_cast<int>(std::floor(cfg.eligible_fraction * depth));
  }
  if (eligible < 1 || eligible > depth) {
    throw ConfigError("stylization: eligible block count " + std::to_string(eligible) +
                      " out of range [1, depth = " + std::to_string(depth) + "]");
  }
  return eligible;
}

Index replacement_count(double d, Index s_patch) {
  if (d < 0.0 || d > 1.0) throw ConfigError("stylization: d must lie in [0,1]");
  if (d == 0.0) return 0;
  const Index count = static_cast<Index>(std::llround(d * static_cast<double>(s_patch)));
  return std::max<Index>(1, count);
}

TokenStats token_stats(const Tensor& x, double eps) {
  if (x.rank() != 3) throw ShapeError("token_stats: expected [B,S,C], got " + shape_str(x.shape()));
  const Index s = x.extent(1);
  if (s < 2) throw ShapeError("token_stats: need at least one patch token besides CLS");
  std::vector<Index> patch_positions(static_cast<std::size_t>(s - 1));
  std::iota(patch_positions.begin(), patch_positions.end(), Index{1});
  Tensor patches = gather_tokens(x, patch_positions);       // [B, S-1, C]
  TokenStats stats;
  stats.mu = mean_axis(patches, 1, /*keepdims=*/false);     // [B, C]
  Tensor var = var_axis(patches, 1, /*keepdims=*/false);    // population divisor
  stats.sigma = sqrt_elem(add_scalar(var, eps));
  return stats;
}

double sample_alpha(RngStream& stream, double a, double b) {
  if (a <= 0.0 || b <= 0.0) throw ConfigError("sample_alpha: Beta shapes must be > 0");
  for (;;) {
    const double u = stream.uniform();
    const double v = stream.uniform();
    if (u <= 0.0 || v <= 0.0) continue;
    const double x = std::pow(u, 1.0 / a);
    const double y = std::pow(v, 1.0 / b);
    const double sum = x + y;
    if (sum > 1.0) continue;
    if (sum > 0.0) return x / sum;
    // Both powers underflowed; the ratio survives in log space.
    const double lx = std::log(u) / a;
    const double ly = std::log(v) / b;
    return 1.0 / (1.0 + std::exp(ly - lx));
  }
}

Tensor stylize(const Tensor& x, const TokenStats& own, const TokenStats& other,
               const Tensor& alpha) {
  if (x.rank() != 3) throw ShapeError("stylize: expected [B,S,C]");
  const Index b = x.extent(0), s = x.extent(1), c = x.extent(2);
  if (own.mu.shape() != Shape{b, c} || other.mu.shape() != Shape{b, c}) {
    throw ShapeError("stylize: stats shape mismatch");
  }
  if (alpha.size() != b) throw ShapeError("stylize: alpha must have one entry per sample");

  Tensor a3 = reshape(alpha, {b, 1, 1});
  Tensor one_minus = add_scalar(mul_scalar(a3, -1.0), 1.0);
  auto lift = [&](const Tensor& t) { return reshape(t, {b, 1, c}); };
  Tensor gamma_mix = add(mul(a3, lift(own.sigma)), mul(one_minus, lift(other.sigma)));
  Tensor beta_mix = add(mul(a3, lift(own.mu)), mul(one_minus, lift(other.mu)));

  std::vector<Index> patch_positions(static_cast<std::size_t>(s - 1));
  std::iota(patch_positions.begin(), patch_positions.end(), Index{1});
  Tensor cls = gather_tokens(x, std::vector<Index>{0});
  Tensor patches = gather_tokens(x, patch_positions);
  Tensor normalized = div(sub(patches, lift(own.mu)), lift(own.sigma));
  Tensor styled = add(mul(normalized, gamma_mix), beta_mix);
  return concat(cls, styled, 1);
}

std::vector<Index> select_tokens(Strategy strategy, double d, Index s_patch,
                                 const std::vector<double>* m_cls, RngStream* stream) {
  if (strategy == Strategy::kAll) {
    std::vector<Index> all(static_cast<std::size_t>(s_patch));
    std::iota(all.begin(), all.end(), Index{0});
    return all;
  }
  const Index count = replacement_count(d, s_patch);
  if (count == 0) return {};
  if (strategy == Strategy::kRandom) {
    if (!stream) throw ConfigError("select_tokens: Random strategy needs a stream");
    return stream->sample_without_replacement(s_patch, count);
  }
  if (!m_cls || static_cast<Index>(m_cls->size()) != s_patch) {
    throw ConfigError("select_tokens: CLS strategies require m_cls of length " +
                      std::to_string(s_patch));
  }
  std::vector<Index> order(static_cast<std::size_t>(s_patch));
  std::iota(order.begin(), order.end(), Index{0});
  const auto& m = *m_cls;
  if (strategy == Strategy::kHighCls) {
    std::sort(order.begin(), order.end(), [&](Index i, Index j) {
      const double mi = m[static_cast<std::size_t>(i)], mj = m[static_cast<std::size_t>(j)];
      return mi != mj ? mi > mj : i < j;
    });
  } else {
    std::sort(order.begin(), order.end(), [&](Index i, Index j) {
      const double mi = m[static_cast<std::size_t>(i)], mj = m[static_cast<std::size_t>(j)];
      return mi != mj ? mi < mj : i < j;
    });
  }
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<int> choose_layers(int n, int eligible, LayerPolicy policy, RngStream& stream) {
  if (n < 1 || n > eligible) {
    throw ConfigError("choose_layers: n = " + std::to_string(n) + " out of [1, " +
                      std::to_string(eligible) + "]");
  }
  if (policy == LayerPolicy::kFixedPrefix) {
    std::vector<int> first(static_cast<std::size_t>(n));
    std::iota(first.begin(), first.end(), 0);
    return first;
  }
  auto picks = stream.sample_without_replacement(eligible, n);
  return std::vector<int>(picks.begin(), picks.end());
}

const LayerPlan* StylePlan::find(int block) const {
  for (const auto& lp : layers) {
    if (lp.block == block) return &lp;
  }
  return nullptr;
}

StylePlan fresh_plan(const StylizationConfig& cfg, int depth, Index batch, Index s_patch,
                     LayerPolicy policy, RngStream& stream) {
  cfg.validate(depth);
  if (batch < 1) throw ConfigError("fresh_plan: batch must be >= 1");
  if (s_patch < 1) throw ConfigError("fresh_plan: s_patch must be >= 1");
  const int eligible = eligible_block_count(cfg, depth);
  StylePlan plan;
  for (int block : choose_layers(cfg.layers_per_step, eligible, policy, stream)) {
    LayerPlan lp;
    lp.block = block;
    lp.pairing = stream.permutation(batch);
    lp.alpha.reserve(static_cast<std::size_t>(batch));
    for (Index bi = 0; bi < batch; ++bi) {
      lp.alpha.push_back(sample_alpha(stream, cfg.beta_a, cfg.beta_b));
    }
    if (cfg.strategy == Strategy::kAll || cfg.strategy == Strategy::kRandom) {
      lp.token_sets.reserve(static_cast<std::size_t>(batch));
      for (Index bi = 0; bi < batch; ++bi) {
        lp.token_sets.push_back(
            select_tokens(cfg.strategy, cfg.token_fraction, s_patch, nullptr, &stream));
      }
    }
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

Stylizer::Stylizer(StylizationConfig cfg, int depth) : cfg_(std::move(cfg)), depth_(depth) {
  cfg_.validate(depth_);
}

bool Stylizer::armed(int block) const { return plan_.find(block) != nullptr; }

Tensor Stylizer::apply(int block, const Tensor& tokens, const vit::AttentionRecord& attention) {
  const LayerPlan* lp = plan_.find(block);
  if (!lp) return tokens;
  const Index b = tokens.extent(0);
  const Index s_patch = tokens.extent(1) - 1;
  if (static_cast<Index>(lp->pairing.size()) != b) {
    throw ShapeError("stylizer: plan drawn for batch " + std::to_string(lp->pairing.size()) +
                     " applied to batch " + std::to_string(b));
  }
  const Index count = cfg_.strategy == Strategy::kAll
                          ? s_patch
                          : replacement_count(cfg_.token_fraction, s_patch);
  if (count == 0) return tokens;

  // Resolve per-sample replacement sets in patch-index space.
  std::vector<std::vector<Index>> sets;
  if (cfg_.strategy == Strategy::kHighCls || cfg_.strategy == Strategy::kLowCls) {
    Tensor m_cls = vit::cls_attention_map(attention);  // [B, S-1]
    sets.reserve(static_cast<std::size_t>(b));
    for (Index bi = 0; bi < b; ++bi) {
      std::vector<double> row(m_cls.data() + bi * s_patch, m_cls.data() + (bi + 1) * s_patch);
      sets.push_back(select_tokens(cfg_.strategy, cfg_.token_fraction, s_patch, &row, nullptr));
    }
  } else {
    sets = lp->token_sets;
  }

  Tensor base = cfg_.detach_stats ? tokens.detached() : tokens;
  TokenStats own = token_stats(base, cfg_.eps);
  TokenStats other{gather_rows(own.mu, lp->pairing), gather_rows(own.sigma, lp->pairing)};
  Tensor alpha({b}, num::DVec(lp->alpha.begin(), lp->alpha.end()));
  Tensor phi = stylize(tokens, own, other, alpha);

  // Shift patch indices to token positions (CLS occupies position 0).
  std::vector<std::vector<Index>> positions(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    positions[i].reserve(sets[i].size());
    for (Index p : sets[i]) positions[i].push_back(p + 1);
  }
  Tensor replacement = gather_tokens(phi, positions);
  return scatter_tokens(tokens, positions, replacement);
}

}  // namespace tfs::style
