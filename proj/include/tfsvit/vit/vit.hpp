// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tfsvit/common/rng.hpp"
#include "tfsvit/numerics/ops.hpp"
#include "tfsvit/numerics/tape.hpp"
#include "tfsvit/numerics/tensor.hpp"

namespace tfs::vit {

using num::Index;
using num::Tensor;

struct ViTConfig {
  int image_size = 32;
  int patch_size = 4;
  int in_channels = 3;
  int embed_dim = 64;
  int depth = 8;
  int heads = 4;
  double mlp_ratio = 2.0;
  int num_classes = 4;
  double eps_ln = 1e-6;

  int grid() const { return image_size / patch_size; }
  int patch_tokens() const { return grid() * grid(); }
  int tokens() const { return patch_tokens() + 1; }  // CLS at position 0
  int head_dim() const { return embed_dim / heads; }
  int hidden_dim() const { return static_cast<int>(embed_dim * mlp_ratio); }
  int patch_dim() const { return in_channels * patch_size * patch_size; }

  void validate() const;
};

// Closed-form parameter count; tested against the actual allocation.
long long param_count(const ViTConfig& cfg);

struct Param {
  std::string name;
  Tensor value;  // untracked buffer, mutated by the optimizer
};

// Post-softmax attention of one block, shape [B, H, S, S]; plain values,
// row sums are 1 per head.
struct AttentionRecord {
  Tensor values;
};

// Head-mean CLS attention over patch tokens: row 0 of mean_h(A) without the
// CLS column. Returns [B, S-1].
Tensor cls_attention_map(const AttentionRecord& record);

// Transformation spliced between blocks during training (the stylization
// module implements it). `tokens` is the block output [B, S, C].
class TokenHook {
 public:
  virtual ~TokenHook() = default;
  virtual bool armed(int block) const = 0;
  virtual Tensor apply(int block, const Tensor& tokens, const AttentionRecord& attention) = 0;
};

struct ForwardOptions {
  bool training = false;
  num::Tape* tape = nullptr;
  TokenHook* hook = nullptr;           // consulted only when training
  bool record_attention = false;       // always kept in training mode
  bool record_block_outputs = false;
};

struct ForwardResult {
  std::vector<Tensor> block_outputs;          // per block, [B, S, C]
  std::vector<AttentionRecord> attention;     // per block (may be empty in eval)
  Tensor logits;                              // [B, num_classes]
  std::optional<Tensor> loss;                 // scalar, present when labels given
  std::vector<Tensor> param_leaves;           // tracked leaves when a tape is set
};

// DeiT-style backbone: patch embedding + CLS + learned positions, pre-norm
// MSA/MLP blocks, final layer norm, linear head.
class ViTModel {
 public:
  ViTModel(const ViTConfig& cfg, RngStream init_stream);

  const ViTConfig& config() const { return cfg_; }
  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }

  ForwardResult forward(const Tensor& images, const std::vector<int>* labels,
                        const ForwardOptions& opts) const;

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& weights);

 private:
  struct BlockRefs {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  int add_param(const std::string& name, num::Shape shape);

  ViTConfig cfg_;
  std::vector<Param> params_;
  int patch_w_ = -1, patch_b_ = -1, cls_ = -1, pos_ = -1;
  std::vector<BlockRefs> blocks_;
  int final_g_ = -1, final_b_ = -1, head_w_ = -1, head_b_ = -1;
};

// Non-overlapping patch extraction: [B, in, HW, HW] -> [B, P, in*ps*ps]
// with channel-major layout inside each patch vector.
Tensor patchify(const Tensor& images, const ViTConfig& cfg);

// Patch-grid token index that pixel (y, x) lands in.
int patch_index_of(int y, int x, const ViTConfig& cfg);

}  // namespace tfs::vit
