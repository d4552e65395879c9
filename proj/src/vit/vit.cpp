// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/vit/vit.hpp"

#include <malloc.h>

#include <cmath>
#include <mutex>

namespace tfs::vit {

using namespace tfs::num;

namespace {

// Forward/backward passes allocate MB-scale tensors at a high rate. Keeping
// those blocks on the heap instead of per-allocation mmap round-trips (with
// their page-fault and kernel-zeroing cost) roughly halves the step time.
void tune_allocator() {
#ifdef __GLIBC__
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

void ViTConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw ConfigError("vit: image_size must be a positive multiple of patch_size");
  }
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
    throw ConfigError("vit: embed_dim must be a positive multiple of heads");
  }
  if (depth < 1) throw ConfigError("vit: depth must be >= 1");
  if (in_channels < 1) throw ConfigError("vit: in_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("vit: num_classes must be >= 2");
  if (mlp_ratio <= 0.0) throw ConfigError("vit: mlp_ratio must be > 0");
  if (eps_ln <= 0.0) throw ConfigError("vit: eps_ln must be > 0");
}

long long param_count(const ViTConfig& cfg) {
  const long long c = cfg.embed_dim;
  const long long ch = cfg.hidden_dim();
  const long long s = cfg.tokens();
  const long long d = cfg.patch_dim();
  const long long k = cfg.num_classes;
  const long long per_block = 2 * c                  // ln1
                              + 4 * (c * c + c)      // wq,bq,wk,bk,wv,bv,wo,bo
                              + 2 * c                // ln2
                              + (c * ch + ch)        // mlp in
                              + (ch * c + c);        // mlp out
  return d * c + c      // patch projection
         + c            // cls token
         + s * c        // positional embeddings
         + cfg.depth * per_block
         + 2 * c        // final layer norm
         + c * k + k;   // head
}

int ViTModel::add_param(const std::string& name, Shape shape) {
  params_.push_back({name, Tensor(std::move(shape))});
  return static_cast<int>(params_.size()) - 1;
}

ViTModel::ViTModel(const ViTConfig& cfg, RngStream init_stream) : cfg_(cfg) {
  tune_allocator();
  cfg_.validate();
  const int c = cfg_.embed_dim;
  const int ch = cfg_.hidden_dim();
  const int s = cfg_.tokens();

  patch_w_ = add_param("patch_proj.weight", {cfg_.patch_dim(), c});
  patch_b_ = add_param("patch_proj.bias", {c});
  cls_ = add_param("cls_token", {1, 1, c});
  pos_ = add_param("pos_embed", {1, s, c});
  for (int k = 0; k < cfg_.depth; ++k) {
    const std::string p = "blocks." + std::to_string(k) + ".";
    BlockRefs r;
    r.ln1_g = add_param(p + "ln1.gamma", {c});
    r.ln1_b = add_param(p + "ln1.beta", {c});
    r.wq = add_param(p + "attn.wq", {c, c});
    r.bq = add_param(p + "attn.bq", {c});
    r.wk = add_param(p + "attn.wk", {c, c});
    r.bk = add_param(p + "attn.bk", {c});
    r.wv = add_param(p + "attn.wv", {c, c});
    r.bv = add_param(p + "attn.bv", {c});
    r.wo = add_param(p + "attn.wo", {c, c});
    r.bo = add_param(p + "attn.bo", {c});
    r.ln2_g = add_param(p + "ln2.gamma", {c});
    r.ln2_b = add_param(p + "ln2.beta", {c});
    r.w1 = add_param(p + "mlp.w1", {c, ch});
    r.b1 = add_param(p + "mlp.b1", {ch});
    r.w2 = add_param(p + "mlp.w2", {ch, c});
    r.b2 = add_param(p + "mlp.b2", {c});
    blocks_.push_back(r);
  }
  final_g_ = add_param("final_ln.gamma", {c});
  final_b_ = add_param("final_ln.beta", {c});
  head_w_ = add_param("head.weight", {c, cfg_.num_classes});
  head_b_ = add_param("head.bias", {cfg_.num_classes});

  // Weight matrices: normal(0, 0.02) truncated at +-2 sigma. Positional
  // embeddings: plain normal(0, 0.02). Biases and CLS start at zero,
  // layer-norm gains at one.
  for (auto& param : params_) {
    const bool is_matrix = param.value.rank() == 2;
    const bool is_gamma = param.name.ends_with("gamma");
    double* p = param.value.mutable_data();
    if (is_gamma) {
      for (Index i = 0; i < param.value.size(); ++i) p[i] = 1.0;
    } else if (is_matrix) {
      for (Index i = 0; i < param.value.size(); ++i) {
        p[i] = 0.02 * init_stream.truncated_normal(2.0);
      }
    } else if (param.name == "pos_embed") {
      for (Index i = 0; i < param.value.size(); ++i) p[i] = 0.02 * init_stream.normal();
    }
    // everything else stays zero
  }
}

std::vector<std::vector<double>> ViTModel::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) {
    out.emplace_back(p.value.data(), p.value.data() + p.value.size());
  }
  return out;
}

void ViTModel::restore(const std::vector<std::vector<double>>& weights) {
  if (weights.size() != params_.size()) throw ShapeError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (static_cast<Index>(weights[i].size()) != params_[i].value.size()) {
      throw ShapeError("restore: size mismatch for " + params_[i].name);
    }
    double* p = params_[i].value.mutable_data();
    for (std::size_t j = 0; j < weights[i].size(); ++j) p[j] = weights[i][j];
  }
}

Tensor patchify(const Tensor& images, const ViTConfig& cfg) {
  if (images.rank() != 4 || images.extent(1) != cfg.in_channels ||
      images.extent(2) != cfg.image_size || images.extent(3) != cfg.image_size) {
    throw ShapeError("patchify: expected images [B," + std::to_string(cfg.in_channels) + "," +
                     std::to_string(cfg.image_size) + "," + std::to_string(cfg.image_size) +
                     "], got " + shape_str(images.shape()));
  }
  const Index b = images.extent(0);
  const int g = cfg.grid();
  const int ps = cfg.patch_size;
  const int in = cfg.in_channels;
  const Index pd = cfg.patch_dim();
  const Index np = cfg.patch_tokens();
  DVec out(static_cast<std::size_t>(b * np * pd));
  const double* src = images.data();
  const Index chan_stride = static_cast<Index>(cfg.image_size) * cfg.image_size;
  const Index img_stride = in * chan_stride;
  for (Index bi = 0; bi < b; ++bi) {
    for (int gy = 0; gy < g; ++gy) {
      for (int gx = 0; gx < g; ++gx) {
        double* dst = out.data() + ((bi * np + gy * g + gx) * pd);
        Index w = 0;
        for (int ci = 0; ci < in; ++ci) {
          for (int py = 0; py < ps; ++py) {
            const double* row = src + bi * img_stride + ci * chan_stride +
                                static_cast<Index>(gy * ps + py) * cfg.image_size + gx * ps;
            for (int px = 0; px < ps; ++px) dst[w++] = row[px];
          }
        }
      }
    }
  }
  return Tensor({b, np, pd}, std::move(out));
}

int patch_index_of(int y, int x, const ViTConfig& cfg) {
  return (y / cfg.patch_size) * cfg.grid() + (x / cfg.patch_size);
}

Tensor cls_attention_map(const AttentionRecord& record) {
  const Tensor& a = record.values;
  if (a.rank() != 4) throw ShapeError("cls_attention_map: expected [B,H,S,S]");
  const Index b = a.extent(0), h = a.extent(1), s = a.extent(2);
  DVec out(static_cast<std::size_t>(b * (s - 1)), 0.0);
  const double* p = a.data();
  for (Index bi = 0; bi < b; ++bi) {
    for (Index hi = 0; hi < h; ++hi) {
      // Row 0 (CLS query) of this head, skipping the CLS column.
      const double* row = p + ((bi * h + hi) * s + 0) * s;
      for (Index t = 1; t < s; ++t) {
        out[static_cast<std::size_t>(bi * (s - 1) + (t - 1))] += row[t];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(h);
  for (auto& v : out) v *= inv;
  return Tensor({b, s - 1}, std::move(out));
}

ForwardResult ViTModel::forward(const Tensor& images, const std::vector<int>* labels,
                                const ForwardOptions& opts) const {
  const Index b = images.extent(0);
  const int s = cfg_.tokens();
  const int c = cfg_.embed_dim;
  const int h = cfg_.heads;
  const int dk = cfg_.head_dim();

  ForwardResult result;
  result.param_leaves.reserve(params_.size());
  for (const auto& p : params_) {
    result.param_leaves.push_back(opts.tape ? opts.tape->leaf(p.value) : p.value.detached());
  }
  auto leaf = [&](int i) -> const Tensor& { return result.param_leaves[static_cast<std::size_t>(i)]; };

  const bool keep_attention = opts.training || opts.record_attention;

  Tensor patches = patchify(images, cfg_);
  Tensor x = linear(patches, leaf(patch_w_), leaf(patch_b_));            // [B,P,C]
  Tensor cls = add(Tensor::zeros({b, 1, c}), leaf(cls_));                // [B,1,C]
  x = concat(cls, x, 1);                                                 // [B,S,C]
  x = add(x, leaf(pos_));

  for (int k = 0; k < cfg_.depth; ++k) {
    const auto& r = blocks_[static_cast<std::size_t>(k)];
    // Pre-norm multi-head self-attention.
    Tensor n1 = layer_norm(x, leaf(r.ln1_g), leaf(r.ln1_b), cfg_.eps_ln);
    auto split_heads = [&](const Tensor& t) {
      return permute(reshape(t, {b, s, h, dk}), {0, 2, 1, 3});           // [B,H,S,dk]
    };
    // 1/sqrt(d_k) folded into q: cheaper than scaling the S x S scores.
    Tensor q = split_heads(mul_scalar(linear(n1, leaf(r.wq), leaf(r.bq)), 1.0 / std::sqrt(dk)));
    Tensor key = split_heads(linear(n1, leaf(r.wk), leaf(r.bk)));
    Tensor v = split_heads(linear(n1, leaf(r.wv), leaf(r.bv)));
    Tensor scores = matmul(q, permute(key, {0, 1, 3, 2}));
    Tensor attn = softmax_rows(scores);                                  // [B,H,S,S]
    Tensor ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {b, s, c});
    Tensor o = linear(ctx, leaf(r.wo), leaf(r.bo));
    Tensor x1 = add(x, o);
    // Pre-norm MLP.
    Tensor n2 = layer_norm(x1, leaf(r.ln2_g), leaf(r.ln2_b), cfg_.eps_ln);
    Tensor hidden = gelu(linear(n2, leaf(r.w1), leaf(r.b1)));
    Tensor m = linear(hidden, leaf(r.w2), leaf(r.b2));
    x = add(x1, m);

    AttentionRecord record{attn.detached()};
    // The hook transforms the block output, i.e. the input of block k+1.
    if (opts.training && opts.hook && opts.hook->armed(k)) {
      x = opts.hook->apply(k, x, record);
    }
    if (keep_attention) {
      result.attention.push_back(std::move(record));
    }
    if (opts.record_block_outputs) result.block_outputs.push_back(x);
  }

  Tensor xf = layer_norm(x, leaf(final_g_), leaf(final_b_), cfg_.eps_ln);
  Tensor cls_final = reshape(gather_tokens(xf, std::vector<Index>{0}), {b, c});
  result.logits = linear(cls_final, leaf(head_w_), leaf(head_b_));
  if (labels) {
    result.loss = cross_entropy(result.logits, *labels);
  }
  return result;
}

}  // namespace tfs::vit
