// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "tfsvit/vit/vit.hpp"

using namespace tfs;
using namespace tfs::num;
using namespace tfs::vit;
using tfs::test::compare_gradients;
using tfs::test::max_abs_diff;
using tfs::test::random_tensor;

namespace {

ViTConfig tiny_config() {
  ViTConfig cfg;
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

ViTConfig desk_config() { return ViTConfig{}; }

void zero_params(ViTModel& model) {
  for (auto& p : model.parameters()) {
    double* d = p.value.mutable_data();
    for (Index i = 0; i < p.value.size(); ++i) d[i] = 0.0;
  }
}

}  // namespace

TEST_CASE("desk config token arithmetic: 32x32 image, patch 4 -> 65 tokens") {
  ViTConfig cfg = desk_config();
  CHECK(cfg.grid() == 8);
  CHECK(cfg.patch_tokens() == 64);
  CHECK(cfg.tokens() == 65);
  CHECK_THROWS_AS([] { ViTConfig bad; bad.patch_size = 5; bad.validate(); }(), ConfigError);
  CHECK_THROWS_AS([] { ViTConfig bad; bad.heads = 3; bad.validate(); }(), ConfigError);
}

TEST_CASE("parameter count formula matches actual allocation") {
  for (const ViTConfig& cfg : {tiny_config(), desk_config()}) {
    ViTModel model(cfg, RngStream(1, "init"));
    long long total = 0;
    for (const auto& p : model.parameters()) total += p.value.size();
    CHECK(total == param_count(cfg));
  }
}

TEST_CASE("patchify: zero weights give zero embeddings; white pixel hits one token") {
  ViTConfig cfg = desk_config();
  ViTModel model(cfg, RngStream(2, "init"));
  zero_params(model);

  RngStream rng(3, "img");
  Tensor images = tfs::test::random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
  ForwardOptions opts;
  opts.record_block_outputs = true;
  auto out = model.forward(images, nullptr, opts);
  // All-zero weights: logits are zero regardless of input.
  for (Index i = 0; i < out.logits.size(); ++i) CHECK(out.logits.data()[i] == 0.0);

  // Locality: a single lit pixel lands in exactly one patch vector.
  Tensor one = Tensor::zeros({1, 3, 32, 32});
  const int y = 13, x = 27, chan = 1;
  one.mutable_data()[(chan * 32 + y) * 32 + x] = 1.0;
  Tensor patches = patchify(one, cfg);
  const int hot = patch_index_of(y, x, cfg);
  CHECK(hot == (13 / 4) * 8 + (27 / 4));
  for (Index p = 0; p < cfg.patch_tokens(); ++p) {
    double sum = 0.0;
    for (Index j = 0; j < cfg.patch_dim(); ++j) sum += std::fabs(patches.at({0, p, j}));
    if (p == hot) {
      CHECK(sum == 1.0);
    } else {
      CHECK(sum == 0.0);
    }
  }
  CHECK_THROWS_AS(patchify(Tensor::zeros({1, 3, 16, 16}), cfg), ShapeError);
}

TEST_CASE("attention rows sum to 1 for every head and block") {
  ViTConfig cfg = tiny_config();
  ViTModel model(cfg, RngStream(5, "init"));
  RngStream rng(6, "img");
  Tensor images = random_tensor({3, 3, 8, 8}, rng, 0.0, 1.0);
  ForwardOptions opts;
  opts.record_attention = true;
  auto out = model.forward(images, nullptr, opts);
  REQUIRE(out.attention.size() == static_cast<std::size_t>(cfg.depth));
  const Index s = cfg.tokens();
  for (const auto& rec : out.attention) {
    REQUIRE(rec.values.shape() == Shape{3, cfg.heads, s, s});
    const double* p = rec.values.data();
    const Index rows = rec.values.size() / s;
    for (Index r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (Index j = 0; j < s; ++j) {
        CHECK(p[r * s + j] >= 0.0);
        sum += p[r * s + j];
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("uniform logits from zero weights give ln(num_classes) loss") {
  ViTConfig cfg = tiny_config();
  ViTModel model(cfg, RngStream(7, "init"));
  zero_params(model);
  RngStream rng(8, "img");
  Tensor images = random_tensor({4, 3, 8, 8}, rng, 0.0, 1.0);
  std::vector<int> labels = {0, 1, 2, 0};
  auto out = model.forward(images, &labels, {});
  REQUIRE(out.loss.has_value());
  CHECK(out.loss->item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  std::vector<int> bad = {0, 1, 3, 0};
  CHECK_THROWS_AS(model.forward(images, &bad, {}), IndexError);
}

TEST_CASE("eval forward is a pure function of weights and images") {
  ViTConfig cfg = tiny_config();
  ViTModel model(cfg, RngStream(9, "init"));
  RngStream rng(10, "img");
  Tensor images = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
  auto a = model.forward(images, nullptr, {});
  auto b = model.forward(images, nullptr, {});
  CHECK(std::memcmp(a.logits.data(), b.logits.data(),
                    sizeof(double) * static_cast<std::size_t>(a.logits.size())) == 0);
}

TEST_CASE("cls_attention_map: uniform, single-head, and hand-averaged cases") {
  // Uniform attention: every entry 1/S -> map entries all 1/S.
  const Index s = 4, h = 3, b = 2;
  AttentionRecord uniform{Tensor::full({b, h, s, s}, 1.0 / static_cast<double>(s))};
  Tensor m = cls_attention_map(uniform);
  REQUIRE(m.shape() == Shape{b, s - 1});
  for (Index i = 0; i < m.size(); ++i) {
    CHECK(m.data()[i] == doctest::Approx(0.25).epsilon(1e-15));
  }

  // H=1: the map is the single head's CLS row.
  Tensor single({1, 1, 3, 3}, {0.2, 0.5, 0.3, 0.1, 0.6, 0.3, 0.3, 0.3, 0.4});
  Tensor ms = cls_attention_map(AttentionRecord{single});
  CHECK(ms.at({0, 0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ms.at({0, 1}) == doctest::Approx(0.3).epsilon(1e-15));

  // Two hand-written 2-head 3x3 attentions; frozen hand average.
  Tensor two({1, 2, 3, 3}, {0.2, 0.5, 0.3, 0.1, 0.6, 0.3, 0.3, 0.3, 0.4,
                            0.6, 0.2, 0.2, 0.25, 0.5, 0.25, 0.1, 0.1, 0.8});
  Tensor mt = cls_attention_map(AttentionRecord{two});
  CHECK(mt.at({0, 0}) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(mt.at({0, 1}) == doctest::Approx(0.25).epsilon(1e-15));

  // Entries nonnegative, total = 1 - M[0,0] (head-mean CLS self-attention).
  RngStream rng(11, "attn");
  ViTModel model(tiny_config(), RngStream(12, "init"));
  Tensor images = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
  ForwardOptions opts;
  opts.record_attention = true;
  auto out = model.forward(images, nullptr, opts);
  const auto& rec = out.attention.back();
  Tensor map = cls_attention_map(rec);
  const Index st = tiny_config().tokens();
  for (Index bi = 0; bi < 2; ++bi) {
    double m00 = 0.0;
    for (Index hi = 0; hi < 2; ++hi) m00 += rec.values.at({bi, hi, 0, 0});
    m00 /= 2.0;
    double total = 0.0;
    for (Index t = 0; t < st - 1; ++t) {
      CHECK(map.at({bi, t}) >= 0.0);
      total += map.at({bi, t});
    }
    CHECK(std::fabs(total - (1.0 - m00)) <= 1e-12);
  }
}

TEST_CASE("tiny ViT end-to-end gradient matches central finite differences") {
  ViTConfig cfg = tiny_config();
  ViTModel model(cfg, RngStream(13, "init"));
  RngStream rng(14, "img");
  Tensor images = random_tensor({4, 3, 8, 8}, rng, 0.0, 1.0);
  std::vector<int> labels = {0, 2, 1, 1};

  Tape tape;
  ForwardOptions opts;
  opts.training = true;
  opts.tape = &tape;
  auto out = model.forward(images, &labels, opts);
  REQUIRE(out.loss.has_value());
  tape.backward(*out.loss);

  auto loss_value = [&]() {
    auto r = model.forward(images, &labels, {});
    return r.loss->item();
  };

  Index total = 0, failures = 0;
  double max_err = 0.0;
  const double h = 1e-5;
  auto& params = model.parameters();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& analytic = tape.grad_of(out.param_leaves[pi]);
    double* data = params[pi].value.mutable_data();
    for (Index j = 0; j < params[pi].value.size(); ++j) {
      const double keep = data[j];
      data[j] = keep + h;
      const double fp = loss_value();
      data[j] = keep - h;
      const double fm = loss_value();
      data[j] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[static_cast<std::size_t>(j)];
      const double err = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      max_err = std::max(max_err, err);
      ++total;
      if (err > 1e-6) ++failures;
    }
  }
  CHECK(total == param_count(cfg));
  // Spec tolerance: relative error <= 1e-6 per parameter.
  CHECK(failures == 0);
  MESSAGE("max relative gradient error: ", max_err);
}
