// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "tfsvit/numerics/adamw.hpp"
#include "tfsvit/numerics/ops.hpp"

using namespace tfs;
using namespace tfs::num;
using tfs::test::check_unary_grad;
using tfs::test::compare_gradients;
using tfs::test::fd_gradient;
using tfs::test::max_abs_diff;
using tfs::test::random_tensor;
using tfs::test::weighted_readout;

TEST_CASE("tensor construction enforces shape/data agreement") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.size() == 4);
  CHECK(t.at({1, 0}) == 3.0);
}

TEST_CASE("ops reject non-finite results") {
  Tensor a({2}, {1.0, 0.0});
  Tensor b({2}, {1.0, 0.0});
  CHECK_THROWS_AS(div(a, b), NumericError);
}

TEST_CASE("matmul identity and hand-contraction examples") {
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  RngStream rng(11, "mm");
  Tensor m = random_tensor({3, 3}, rng);
  CHECK(max_abs_diff(matmul(eye, m), m) == 0.0);

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at({0, 0}) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(c.at({1, 0}) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("matmul matches the brute-force triple loop") {
  RngStream rng(5, "mm-oracle");
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 6}, rng);
  Tensor c = matmul(a, b);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 6; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 5; ++k) acc += a.at({i, k}) * b.at({k, j});
      CHECK(std::fabs(c.at({i, j}) - acc) <= 1e-12);
    }
  }
}

TEST_CASE("matmul shape errors carry dimensions") {
  Tensor a({2, 3});
  Tensor b({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("inner extents"), ShapeError);
  CHECK_THROWS_AS(matmul(Tensor({3}), b), ShapeError);
}

TEST_CASE("batched matmul equals per-slice products and broadcasts batch dims") {
  RngStream rng(17, "mm-batch");
  Tensor a = random_tensor({2, 3, 4, 5}, rng);
  Tensor b = random_tensor({2, 3, 5, 6}, rng);
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 4, 6});
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) {
      for (Index r = 0; r < 4; ++r) {
        for (Index s = 0; s < 6; ++s) {
          double acc = 0.0;
          for (Index k = 0; k < 5; ++k) acc += a.at({i, j, r, k}) * b.at({i, j, k, s});
          CHECK(std::fabs(c.at({i, j, r, s}) - acc) <= 1e-12);
        }
      }
    }
  }

  // One-extent batch broadcasting against a batched right operand.
  Tensor a1 = random_tensor({1, 4, 5}, rng);
  Tensor b3 = random_tensor({3, 5, 6}, rng);
  Tensor c3 = matmul(a1, b3);
  REQUIRE(c3.shape() == Shape{3, 4, 6});
  for (Index n = 0; n < 3; ++n) {
    for (Index r = 0; r < 4; ++r) {
      for (Index s = 0; s < 6; ++s) {
        double acc = 0.0;
        for (Index k = 0; k < 5; ++k) acc += a1.at({0, r, k}) * b3.at({n, k, s});
        CHECK(std::fabs(c3.at({n, r, s}) - acc) <= 1e-12);
      }
    }
  }
}

TEST_CASE("matmul gradients match finite differences") {
  RngStream rng(23, "mm-grad");
  Tensor a0 = random_tensor({3, 4}, rng);
  Tensor b0 = random_tensor({4, 2}, rng);

  auto check_wrt_a = check_unary_grad([&](const Tensor& x) { return matmul(x, b0); }, a0);
  CHECK(check_wrt_a.failures == 0);
  CHECK(check_wrt_a.max_err <= 1e-6);

  auto check_wrt_b = check_unary_grad([&](const Tensor& x) { return matmul(a0, x); }, b0);
  CHECK(check_wrt_b.failures == 0);

  // Batched/folded path: [B,S,k] x [k,n].
  Tensor xb = random_tensor({2, 3, 4}, rng);
  auto folded = check_unary_grad([&](const Tensor& x) { return matmul(xb, x); }, b0);
  CHECK(folded.failures == 0);
  auto folded_a = check_unary_grad([&](const Tensor& x) { return matmul(x, b0); }, xb);
  CHECK(folded_a.failures == 0);

  // Broadcast batch on the left operand.
  Tensor b3 = random_tensor({3, 4, 2}, rng);
  Tensor a1 = random_tensor({1, 5, 4}, rng);
  auto bc = check_unary_grad([&](const Tensor& x) { return matmul(x, b3); }, a1);
  CHECK(bc.failures == 0);
}

TEST_CASE("softmax_rows symmetry, overflow safety, and row sums") {
  Tensor u({3}, {0, 0, 0});
  Tensor s = softmax_rows(u);
  for (Index i = 0; i < 3; ++i) CHECK(s.data()[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor big({2}, {1000.0, 0.0});
  Tensor sb = softmax_rows(big);
  CHECK(sb.data()[0] == doctest::Approx(1.0));
  CHECK(sb.data()[1] < 1e-300);

  RngStream rng(31, "softmax");
  Tensor x = random_tensor({6, 9}, rng, -5.0, 5.0);
  Tensor y = softmax_rows(x);
  for (Index r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (Index j = 0; j < 9; ++j) {
      const double v = y.at({r, j});
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
    // Monotone: larger input, larger probability.
    for (Index i = 0; i < 9; ++i) {
      for (Index j = 0; j < 9; ++j) {
        if (x.at({r, i}) > x.at({r, j})) CHECK(y.at({r, i}) > y.at({r, j}));
      }
    }
  }

  auto gc = check_unary_grad([](const Tensor& t) { return softmax_rows(t); },
                             random_tensor({4, 7}, rng));
  CHECK(gc.failures == 0);
}

TEST_CASE("layer_norm forced cases and two-pass oracle") {
  const double eps = 1e-6;
  Tensor gamma1 = Tensor::full({4}, 1.0);
  Tensor beta0 = Tensor::zeros({4});
  Tensor constant({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1});
  Tensor z = layer_norm(constant, gamma1, beta0, eps);
  for (Index i = 0; i < z.size(); ++i) CHECK(z.data()[i] == 0.0);

  Tensor gamma0 = Tensor::zeros({4});
  Tensor beta({4}, {5, 6, 7, 8});
  RngStream rng(41, "ln");
  Tensor x = random_tensor({3, 4}, rng);
  Tensor only_beta = layer_norm(x, gamma0, beta, eps);
  for (Index r = 0; r < 3; ++r) {
    for (Index j = 0; j < 4; ++j) CHECK(only_beta.at({r, j}) == beta.at({j}));
  }

  // Two-pass mean/variance oracle.
  Tensor xr = random_tensor({5, 8}, rng);
  Tensor g = random_tensor({8}, rng, 0.5, 1.5);
  Tensor b = random_tensor({8}, rng, -0.5, 0.5);
  Tensor out = layer_norm(xr, g, b, eps);
  for (Index r = 0; r < 5; ++r) {
    double mean = 0.0;
    for (Index j = 0; j < 8; ++j) mean += xr.at({r, j});
    mean /= 8.0;
    double var = 0.0;
    for (Index j = 0; j < 8; ++j) var += (xr.at({r, j}) - mean) * (xr.at({r, j}) - mean);
    var /= 8.0;
    for (Index j = 0; j < 8; ++j) {
      const double expect = (xr.at({r, j}) - mean) / std::sqrt(var + eps) * g.at({j}) + b.at({j});
      CHECK(std::fabs(out.at({r, j}) - expect) <= 1e-12);
    }
  }

  // Normalization invariant with unit affine.
  Tensor big = random_tensor({10, 16}, rng, -3.0, 3.0);
  Tensor norm = layer_norm(big, Tensor::full({16}, 1.0), Tensor::zeros({16}), eps);
  for (Index r = 0; r < 10; ++r) {
    double mean = 0.0, var = 0.0;
    for (Index j = 0; j < 16; ++j) mean += norm.at({r, j});
    mean /= 16.0;
    for (Index j = 0; j < 16; ++j) var += (norm.at({r, j}) - mean) * (norm.at({r, j}) - mean);
    var /= 16.0;
    CHECK(std::fabs(mean) <= 1e-10);
    CHECK(std::fabs(var - 1.0) <= 1e-6);
  }

  CHECK_THROWS_AS(layer_norm(x, gamma1, beta0, 0.0), ConfigError);
}

TEST_CASE("layer_norm gradients (x, gamma, beta) match finite differences") {
  RngStream rng(43, "ln-grad");
  Tensor x0 = random_tensor({3, 6}, rng);
  Tensor g0 = random_tensor({6}, rng, 0.5, 1.5);
  Tensor b0 = random_tensor({6}, rng);
  const double eps = 1e-6;
  auto wx = check_unary_grad([&](const Tensor& t) { return layer_norm(t, g0, b0, eps); }, x0);
  CHECK(wx.failures == 0);
  auto wg = check_unary_grad([&](const Tensor& t) { return layer_norm(x0, t, b0, eps); }, g0);
  CHECK(wg.failures == 0);
  auto wb = check_unary_grad([&](const Tensor& t) { return layer_norm(x0, g0, t, eps); }, b0);
  CHECK(wb.failures == 0);
}

TEST_CASE("gelu, reductions, elementwise broadcasting") {
  Tensor zero = Tensor::zeros({1});
  CHECK(gelu(zero).item() == 0.0);

  Tensor ones = Tensor::full({3, 4}, 1.0);
  Tensor m = mean_axis(ones, 1, false);
  for (Index i = 0; i < 3; ++i) CHECK(m.data()[i] == doctest::Approx(1.0).epsilon(1e-15));

  RngStream rng(47, "elem");
  Tensor x = random_tensor({2, 5, 3}, rng);
  // var_axis against a two-pass loop (population divisor).
  Tensor v = var_axis(x, 1, false);
  for (Index b = 0; b < 2; ++b) {
    for (Index c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (Index s = 0; s < 5; ++s) mean += x.at({b, s, c});
      mean /= 5.0;
      double var = 0.0;
      for (Index s = 0; s < 5; ++s) var += (x.at({b, s, c}) - mean) * (x.at({b, s, c}) - mean);
      var /= 5.0;
      CHECK(std::fabs(v.at({b, c}) - var) <= 1e-12);
    }
  }

  // Broadcast [B,1,C] against [B,S,C].
  Tensor mu = mean_axis(x, 1, true);
  Tensor centered = sub(x, mu);
  Tensor remean = mean_axis(centered, 1, false);
  for (Index i = 0; i < remean.size(); ++i) CHECK(std::fabs(remean.data()[i]) <= 1e-12);

  // Bias-style broadcast [C] against [B,S,C].
  Tensor bias({3}, {1, 2, 3});
  Tensor shifted = add(x, bias);
  CHECK(shifted.at({1, 2, 2}) == doctest::Approx(x.at({1, 2, 2}) + 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(add(Tensor({2, 3}), Tensor({4})), ShapeError);

  auto g1 = check_unary_grad([](const Tensor& t) { return gelu(t); }, random_tensor({11}, rng));
  CHECK(g1.failures == 0);
  auto g2 = check_unary_grad([&](const Tensor& t) { return var_axis(t, 1, false); }, x);
  CHECK(g2.failures == 0);
  auto g3 = check_unary_grad([&](const Tensor& t) { return div(x, add_scalar(mul(t, t), 1.0)); }, x);
  CHECK(g3.failures == 0);
  auto g4 = check_unary_grad([&](const Tensor& t) { return sqrt_elem(t); },
                             random_tensor({7}, rng, 0.5, 4.0));
  CHECK(g4.failures == 0);
}

TEST_CASE("gather/scatter round-trip and index validation") {
  RngStream rng(53, "gs");
  Tensor x = random_tensor({2, 6, 3}, rng);
  std::vector<std::vector<Index>> idx = {{4, 1, 5}, {0, 2, 3}};
  Tensor g = gather_tokens(x, idx);
  Tensor back = scatter_tokens(x, idx, g);
  CHECK(max_abs_diff(back, x) == 0.0);

  CHECK_THROWS_AS(gather_tokens(x, std::vector<Index>{6}), IndexError);
  CHECK_THROWS_AS(scatter_tokens(x, {{1, 1, 2}, {0, 2, 3}}, g), IndexError);

  auto gx = check_unary_grad([&](const Tensor& t) { return gather_tokens(t, idx); }, x);
  CHECK(gx.failures == 0);
  Tensor vals = random_tensor({2, 3, 3}, rng);
  auto sx = check_unary_grad([&](const Tensor& t) { return scatter_tokens(t, idx, vals); }, x);
  CHECK(sx.failures == 0);
  auto sv = check_unary_grad([&](const Tensor& t) { return scatter_tokens(x, idx, t); }, vals);
  CHECK(sv.failures == 0);

  // Batch-axis gather.
  std::vector<Index> perm = {1, 0};
  Tensor rows = gather_rows(x, perm);
  CHECK(max_abs_diff(gather_rows(rows, perm), x) == 0.0);
  auto gr = check_unary_grad([&](const Tensor& t) { return gather_rows(t, perm); }, x);
  CHECK(gr.failures == 0);
}

TEST_CASE("reshape, permute, concat") {
  RngStream rng(59, "struct");
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor r = reshape(x, {6, 4});
  CHECK(r.at({4, 1}) == x.at({1, 1, 1}));
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);

  Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  CHECK(p.at({3, 1, 2}) == x.at({1, 2, 3}));
  CHECK_THROWS_AS(permute(x, {0, 0, 1}), ShapeError);

  Tensor a = random_tensor({2, 2, 4}, rng);
  Tensor c = concat(a, x, 1);
  CHECK(c.shape() == Shape{2, 5, 4});
  CHECK(c.at({1, 0, 2}) == a.at({1, 0, 2}));
  CHECK(c.at({1, 3, 2}) == x.at({1, 1, 2}));
  CHECK_THROWS_AS(concat(a, Tensor({2, 2, 5}), 1), ShapeError);

  auto g1 = check_unary_grad([&](const Tensor& t) { return permute(t, {2, 0, 1}); }, x);
  CHECK(g1.failures == 0);
  auto g2 = check_unary_grad([&](const Tensor& t) { return concat(t, x, 1); }, a);
  CHECK(g2.failures == 0);
  auto g3 = check_unary_grad([&](const Tensor& t) { return concat(a, t, 1); }, x);
  CHECK(g3.failures == 0);
}

TEST_CASE("backward basics: sum, square, zero for untouched, scalar-only loss") {
  Tape tape;
  Tensor w0({3}, {1, 2, 3});
  Tensor w = tape.leaf(w0);
  Tensor loss = sum_all(w);
  tape.backward(loss);
  for (double v : tape.grad_of(w)) CHECK(v == 1.0);

  Tape tape2;
  Tensor w2 = tape2.leaf(Tensor({1}, {3.0}));
  Tensor sq = sum_all(mul(w2, w2));
  tape2.backward(sq);
  CHECK(tape2.grad_of(w2)[0] == doctest::Approx(6.0).epsilon(1e-15));

  Tape tape3;
  Tensor a = tape3.leaf(Tensor({2}, {1, 2}));
  Tensor unused = tape3.leaf(Tensor({2}, {5, 5}));
  Tensor l3 = sum_all(a);
  tape3.backward(l3);
  for (double v : tape3.grad_of(unused)) CHECK(v == 0.0);

  Tape tape4;
  Tensor vec = tape4.leaf(Tensor({2}, {1, 2}));
  Tensor notscalar = mul_scalar(vec, 2.0);
  CHECK_THROWS_AS(tape4.backward(notscalar), ShapeError);
}

TEST_CASE("bit-identical recompute (sequential reductions)") {
  RngStream rng(61, "det");
  Tensor x = random_tensor({4, 33, 8}, rng);
  auto run = [&]() {
    Tensor a = softmax_rows(x);
    Tensor b = mean_axis(mul(a, a), 1, false);
    return sum_all(b).item();
  };
  const double v1 = run();
  const double v2 = run();
  CHECK(std::memcmp(&v1, &v2, sizeof(double)) == 0);
}

TEST_CASE("cross_entropy: uniform logits, finite-difference gradient, label range") {
  Tensor logits = Tensor::zeros({5, 4});
  std::vector<int> labels = {0, 1, 2, 3, 0};
  CHECK(cross_entropy(logits, labels).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(logits, std::vector<int>{0, 1, 2, 3, 4}), IndexError);

  RngStream rng(67, "ce");
  Tensor l0 = random_tensor({6, 5}, rng);
  std::vector<int> y = {0, 4, 2, 1, 3, 2};
  Tape tape;
  Tensor l = tape.leaf(l0);
  Tensor loss = cross_entropy(l, y);
  tape.backward(loss);
  auto fd = fd_gradient(
      [&](const Tensor& t) { return cross_entropy(t, y).item(); },
      Tensor(l0.shape(), num::DVec(l0.vec())));
  auto cmp = compare_gradients(tape.grad_of(l), fd);
  CHECK(cmp.failures == 0);
}

TEST_CASE("adamw: hand-evaluated updates") {
  // Zero gradient, zero decay: parameters unchanged.
  std::vector<Tensor> params = {Tensor({2}, {1.5, -0.5})};
  auto state = AdamWState::init(params);
  std::vector<double> zero(2, 0.0);
  std::vector<const std::vector<double>*> grads = {&zero};
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  adamw_step(params, grads, state, cfg);
  CHECK(params[0].data()[0] == 1.5);
  CHECK(params[0].data()[1] == -0.5);

  // Single parameter 0, gradient 1: first step moves by about -lr.
  std::vector<Tensor> p2 = {Tensor({1}, {0.0})};
  auto s2 = AdamWState::init(p2);
  std::vector<double> g1(1, 1.0);
  std::vector<const std::vector<double>*> gr2 = {&g1};
  AdamWConfig c2;
  c2.lr = 0.1;
  c2.beta1 = 0.9;
  c2.beta2 = 0.999;
  c2.eps = 1e-8;
  c2.weight_decay = 0.0;
  adamw_step(p2, gr2, s2, c2);
  CHECK(p2[0].data()[0] == doctest::Approx(-0.1).epsilon(1e-6));

  // Decoupled decay: param 1.0, zero grad, lr 0.1, wd 0.01 -> 0.999.
  std::vector<Tensor> p3 = {Tensor({1}, {1.0})};
  auto s3 = AdamWState::init(p3);
  std::vector<double> g0(1, 0.0);
  std::vector<const std::vector<double>*> gr3 = {&g0};
  AdamWConfig c3;
  c3.lr = 0.1;
  c3.weight_decay = 0.01;
  adamw_step(p3, gr3, s3, c3);
  CHECK(p3[0].data()[0] == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("rng streams: determinism, derivation, uniform index bounds") {
  RngStream a(123, "x", 7);
  RngStream b(123, "x", 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(123, "x", 8);
  bool all_same = true;
  RngStream a2(123, "x", 7);
  for (int i = 0; i < 16; ++i) all_same &= (a2.next_u64() == c.next_u64());
  CHECK_FALSE(all_same);

  RngStream d(99, "idx");
  for (int i = 0; i < 1000; ++i) {
    auto v = d.uniform_index(7);
    CHECK(v < 7);
  }
  auto perm = d.permutation(10);
  std::vector<char> seen(10, 0);
  for (auto v : perm) {
    CHECK(v >= 0);
    CHECK(v < 10);
    seen[static_cast<std::size_t>(v)] = 1;
  }
  for (char s : seen) CHECK(s == 1);

  auto samp = d.sample_without_replacement(20, 5);
  CHECK(samp.size() == 5);
  for (std::size_t i = 1; i < samp.size(); ++i) CHECK(samp[i] > samp[i - 1]);
}
