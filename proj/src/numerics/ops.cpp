// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>

namespace tfs::num {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const MatRM>;
using MMap = Eigen::Map<MatRM>;

Tape* result_tape(const Tensor& a, const Tensor& b) {
  Tape* t = a.tracked() ? a.tape() : nullptr;
  if (b.tracked()) {
    if (t && t != b.tape()) throw Error("operands live on different tapes");
    t = b.tape();
  }
  return t;
}

Tape* result_tape(const Tensor& a) { return a.tracked() ? a.tape() : nullptr; }

Tensor make_out(Tape* tape, Shape shape, DVec data) {
  if (tape) return tape->make(std::move(shape), std::move(data));
  return Tensor(std::move(shape), std::move(data));
}

void check_finite(const Tensor& t, const char* context) {
  Eigen::Map<const Eigen::ArrayXd> m(t.data(), t.size());
  if (!m.allFinite()) ensure_finite(t, context);  // locates the offending index and throws
}

// Strides of `shape` right-aligned to an output of rank `out_rank`;
// broadcast axes (extent 1 vs >1) get stride 0.
struct BcastPlan {
  Shape out;
  std::vector<Index> sa, sb;
};

BcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = ra > rb ? ra : rb;
  BcastPlan p;
  p.out.resize(static_cast<std::size_t>(r));
  auto stra = strides_of(a);
  auto strb = strides_of(b);
  p.sa.assign(static_cast<std::size_t>(r), 0);
  p.sb.assign(static_cast<std::size_t>(r), 0);
  for (int i = 0; i < r; ++i) {
    const int ia = ra - r + i, ib = rb - r + i;
    const Index ea = ia >= 0 ? a[static_cast<std::size_t>(ia)] : 1;
    const Index eb = ib >= 0 ? b[static_cast<std::size_t>(ib)] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    p.out[static_cast<std::size_t>(i)] = ea > eb ? ea : eb;
    if (ia >= 0 && ea != 1) p.sa[static_cast<std::size_t>(i)] = stra[static_cast<std::size_t>(ia)];
    if (ib >= 0 && eb != 1) p.sb[static_cast<std::size_t>(i)] = strb[static_cast<std::size_t>(ib)];
  }
  return p;
}

// Calls f(out_flat, off_a, off_b) for every output element, in row-major
// order, tracking strided offsets into both operands.
template <class F>
void for_each_bcast(const BcastPlan& p, F&& f) {
  const Index n = shape_size(p.out);
  const int r = static_cast<int>(p.out.size());
  if (r == 0) {
    f(Index{0}, Index{0}, Index{0});
    return;
  }
  std::vector<Index> c(static_cast<std::size_t>(r), 0);
  Index offa = 0, offb = 0;
  for (Index i = 0; i < n; ++i) {
    f(i, offa, offb);
    for (int ax = r - 1; ax >= 0; --ax) {
      auto u = static_cast<std::size_t>(ax);
      ++c[u];
      offa += p.sa[u];
      offb += p.sb[u];
      if (c[u] < p.out[u]) break;
      offa -= p.sa[u] * p.out[u];
      offb -= p.sb[u] * p.out[u];
      c[u] = 0;
    }
  }
}

// Row-wise variant: f(row_start_flat, off_a, off_b, cols, stride_a, stride_b)
// once per run of the last output axis, keeping the inner loop tight.
template <class F>
void for_each_bcast_rows(const BcastPlan& p, F&& f) {
  const int r = static_cast<int>(p.out.size());
  if (r == 0) {
    f(Index{0}, Index{0}, Index{0}, Index{1}, Index{0}, Index{0});
    return;
  }
  const auto rl = static_cast<std::size_t>(r - 1);
  const Index cols = p.out[rl];
  const Index sa_in = p.sa[rl], sb_in = p.sb[rl];
  const Index rows = shape_size(p.out) / cols;
  if (r == 1) {
    f(Index{0}, Index{0}, Index{0}, cols, sa_in, sb_in);
    return;
  }
  std::vector<Index> c(static_cast<std::size_t>(r - 1), 0);
  Index offa = 0, offb = 0;
  for (Index row = 0; row < rows; ++row) {
    f(row * cols, offa, offb, cols, sa_in, sb_in);
    for (int ax = r - 2; ax >= 0; --ax) {
      auto u = static_cast<std::size_t>(ax);
      ++c[u];
      offa += p.sa[u];
      offb += p.sb[u];
      if (c[u] < p.out[u]) break;
      offa -= p.sa[u] * p.out[u];
      offb -= p.sb[u] * p.out[u];
      c[u] = 0;
    }
  }
}

enum class BinKind { kAdd, kSub, kMul, kDiv };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  BcastPlan plan = broadcast_plan(a.shape(), b.shape(), name);
  const Index n = shape_size(plan.out);
  DVec out(static_cast<std::size_t>(n));
  const double* pa = a.data();
  const double* pb = b.data();

  if (a.shape() == b.shape()) {  // fast path, contiguous
    switch (kind) {
      case BinKind::kAdd:
        for (Index i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
        break;
      case BinKind::kSub:
        for (Index i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
        break;
      case BinKind::kMul:
        for (Index i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
        break;
      case BinKind::kDiv:
        for (Index i = 0; i < n; ++i) out[i] = pa[i] / pb[i];
        break;
    }
  } else {
    for_each_bcast_rows(plan, [&](Index start, Index oa, Index ob, Index cols, Index sa, Index sb) {
      double* o = out.data() + start;
      switch (kind) {
        case BinKind::kAdd:
          for (Index j = 0; j < cols; ++j) o[j] = pa[oa + j * sa] + pb[ob + j * sb];
          break;
        case BinKind::kSub:
          for (Index j = 0; j < cols; ++j) o[j] = pa[oa + j * sa] - pb[ob + j * sb];
          break;
        case BinKind::kMul:
          for (Index j = 0; j < cols; ++j) o[j] = pa[oa + j * sa] * pb[ob + j * sb];
          break;
        case BinKind::kDiv:
          for (Index j = 0; j < cols; ++j) o[j] = pa[oa + j * sa] / pb[ob + j * sb];
          break;
      }
    });
  }

  Tape* tape = result_tape(a, b);
  Tensor res = make_out(tape, plan.out, std::move(out));
  check_finite(res, name);
  if (tape) {
    const int na = a.tracked() ? a.node() : -1;
    const int nb = b.tracked() ? b.node() : -1;
    const int no = res.node();
    tape->record([plan, a, b, kind, na, nb, no](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* ga = na >= 0 ? t.grad(na).data() : nullptr;
      double* gb = nb >= 0 ? t.grad(nb).data() : nullptr;
      const double* pa = a.data();
      const double* pb = b.data();
      const double* g = go->data();
      for_each_bcast_rows(plan, [&](Index start, Index oa, Index ob, Index cols, Index sa,
                                    Index sb) {
        const double* gr = g + start;
        for (Index j = 0; j < cols; ++j) {
          const double gi = gr[j];
          const Index ia = oa + j * sa, ib = ob + j * sb;
          switch (kind) {
            case BinKind::kAdd:
              if (ga) ga[ia] += gi;
              if (gb) gb[ib] += gi;
              break;
            case BinKind::kSub:
              if (ga) ga[ia] += gi;
              if (gb) gb[ib] -= gi;
              break;
            case BinKind::kMul:
              if (ga) ga[ia] += gi * pb[ib];
              if (gb) gb[ib] += gi * pa[ia];
              break;
            case BinKind::kDiv:
              if (ga) ga[ia] += gi / pb[ib];
              if (gb) gb[ib] -= gi * pa[ia] / (pb[ib] * pb[ib]);
              break;
          }
        }
      });
    });
  }
  return res;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kDiv, "div"); }

Tensor add_scalar(const Tensor& x, double c) {
  const Index n = x.size();
  DVec out(static_cast<std::size_t>(n));
  const double* p = x.data();
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = p[i] + c;
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, x.shape(), std::move(out));
  check_finite(res, "add_scalar");
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, n](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (go) t.accumulate(nx, go->data(), n);
    });
  }
  return res;
}

Tensor mul_scalar(const Tensor& x, double c) {
  const Index n = x.size();
  DVec out(static_cast<std::size_t>(n));
  const double* p = x.data();
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = p[i] * c;
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, x.shape(), std::move(out));
  check_finite(res, "mul_scalar");
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, n, c](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      for (Index i = 0; i < n; ++i) gx[i] += g[i] * c;
    });
  }
  return res;
}

Tensor sqrt_elem(const Tensor& x) {
  const Index n = x.size();
  DVec out(static_cast<std::size_t>(n));
  const double* p = x.data();
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::sqrt(p[i]);
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, x.shape(), std::move(out));
  check_finite(res, "sqrt_elem");
  if (tape) {
    const int nx = x.node(), no = res.node();
    Tensor y = res.detached();
    tape->record([nx, no, n, y](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      const double* py = y.data();
      for (Index i = 0; i < n; ++i) gx[i] += g[i] * 0.5 / py[i];
    });
  }
  return res;
}

namespace {
constexpr double kGeluKappa = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

// tanh(kappa * (x + c x^3)) through the exp identity tanh(u) =
// 1 - 2/(exp(2u) + 1); Eigen vectorizes double exp but not double tanh.
// Saturates cleanly: exp overflow gives 1, underflow gives -1.
void gelu_inner_tanh(const double* x, double* out, Index n) {
  Eigen::Map<const Eigen::ArrayXd> xi(x, n);
  Eigen::Map<Eigen::ArrayXd> o(out, n);
  o = 1.0 - 2.0 / ((2.0 * kGeluKappa * (xi + kGeluCubic * xi.cube())).exp() + 1.0);
}
}  // namespace

Tensor gelu(const Tensor& x) {
  const Index n = x.size();
  DVec out(static_cast<std::size_t>(n));
  Tensor inner_tanh(x.shape());  // kept for the backward rule
  const double* p = x.data();
  double* th = inner_tanh.mutable_data();
  gelu_inner_tanh(p, th, n);
  for (Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = 0.5 * p[i] * (1.0 + th[i]);
  }
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, x.shape(), std::move(out));
  check_finite(res, "gelu");
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, n, x, inner_tanh](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      const double* p = x.data();
      const double* th = inner_tanh.data();
      for (Index i = 0; i < n; ++i) {
        const double v = p[i];
        const double t0 = th[i];
        const double du = kGeluKappa * (1.0 + 3.0 * kGeluCubic * v * v);
        gx[i] += g[i] * (0.5 * (1.0 + t0) + 0.5 * v * (1.0 - t0 * t0) * du);
      }
    });
  }
  return res;
}

namespace {

struct MatmulPlan {
  Shape out;
  Index m = 0, k = 0, n = 0;
  // Per flat batch id, element offsets of the matrix starts in a and b.
  std::vector<Index> offa, offb;
  bool fold = false;  // b is a plain [k,n] matrix: single fused GEMM
};

MatmulPlan matmul_plan(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  MatmulPlan p;
  p.m = a.extent(-2);
  p.k = a.extent(-1);
  const Index kb = b.extent(-2);
  p.n = b.extent(-1);
  if (p.k != kb) {
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Shape ba(a.shape().begin(), a.shape().end() - 2);
  Shape bb(b.shape().begin(), b.shape().end() - 2);
  if (bb.empty()) {
    p.fold = true;
    p.out = ba;
    p.out.push_back(p.m);
    p.out.push_back(p.n);
    return p;
  }
  BcastPlan bp = broadcast_plan(ba, bb, "matmul");
  p.out = bp.out;
  p.out.push_back(p.m);
  p.out.push_back(p.n);
  // The odometer walks flat batch indices; element offsets follow by
  // scaling with the per-matrix footprint of each operand.
  for_each_bcast(bp, [&](Index, Index oa, Index ob) {
    p.offa.push_back(oa * p.m * p.k);
    p.offb.push_back(ob * p.k * p.n);
  });
  return p;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  MatmulPlan plan = matmul_plan(a, b);
  const Index m = plan.m, k = plan.k, n = plan.n;
  DVec out(static_cast<std::size_t>(shape_size(plan.out)));
  const double* pa = a.data();
  const double* pb = b.data();

  if (plan.fold) {
    const Index rows = a.size() / k;
    MMap(out.data(), rows, n).noalias() = CMap(pa, rows, k) * CMap(pb, k, n);
  } else {
    const Index nb = static_cast<Index>(plan.offa.size());
    for (Index i = 0; i < nb; ++i) {
      MMap(out.data() + i * m * n, m, n).noalias() =
          CMap(pa + plan.offa[static_cast<std::size_t>(i)], m, k) *
          CMap(pb + plan.offb[static_cast<std::size_t>(i)], k, n);
    }
  }

  Tape* tape = result_tape(a, b);
  Tensor res = make_out(tape, plan.out, std::move(out));
  check_finite(res, "matmul");
  if (tape) {
    const int na = a.tracked() ? a.node() : -1;
    const int nb = b.tracked() ? b.node() : -1;
    const int no = res.node();
    tape->record([plan, a, b, na, nb, no](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      const Index m = plan.m, k = plan.k, n = plan.n;
      const double* g = go->data();
      const double* pa = a.data();
      const double* pb = b.data();
      if (plan.fold) {
        const Index rows = a.size() / k;
        if (na >= 0) {
          MMap(t.grad(na).data(), rows, k).noalias() += CMap(g, rows, n) * CMap(pb, k, n).transpose();
        }
        if (nb >= 0) {
          MMap(t.grad(nb).data(), k, n).noalias() += CMap(pa, rows, k).transpose() * CMap(g, rows, n);
        }
      } else {
        const Index count = static_cast<Index>(plan.offa.size());
        for (Index i = 0; i < count; ++i) {
          const Index oa = plan.offa[static_cast<std::size_t>(i)];
          const Index ob = plan.offb[static_cast<std::size_t>(i)];
          const double* gi = g + i * m * n;
          if (na >= 0) {
            MMap(t.grad(na).data() + oa, m, k).noalias() +=
                CMap(gi, m, n) * CMap(pb + ob, k, n).transpose();
          }
          if (nb >= 0) {
            MMap(t.grad(nb).data() + ob, k, n).noalias() +=
                CMap(pa + oa, m, k).transpose() * CMap(gi, m, n);
          }
        }
      }
    });
  }
  return res;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return add(matmul(x, w), bias);
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax_rows: rank must be >= 1");
  const Index cols = x.extent(-1);
  const Index rows = x.size() / cols;
  DVec out(static_cast<std::size_t>(x.size()));
  const double* p = x.data();
  for (Index r = 0; r < rows; ++r) {
    const double* row = p + r * cols;
    double* orow = out.data() + r * cols;
    double mx = row[0];
    for (Index j = 1; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;
    for (Index j = 0; j < cols; ++j) orow[j] = row[j] - mx;
  }
  {  // one vectorized exp over the whole buffer
    Eigen::Map<Eigen::ArrayXd> o(out.data(), x.size());
    o = o.exp();
  }
  for (Index r = 0; r < rows; ++r) {
    double* orow = out.data() + r * cols;
    double sum = 0.0;
    for (Index j = 0; j < cols; ++j) sum += orow[j];
    const double inv = 1.0 / sum;
    for (Index j = 0; j < cols; ++j) orow[j] *= inv;
  }
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, x.shape(), std::move(out));
  check_finite(res, "softmax_rows");
  if (tape) {
    const int nx = x.node(), no = res.node();
    Tensor y = res.detached();
    tape->record([nx, no, rows, cols, y](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      const double* py = y.data();
      for (Index r = 0; r < rows; ++r) {
        const double* yr = py + r * cols;
        const double* gr = g + r * cols;
        double dot = 0.0;
        for (Index j = 0; j < cols; ++j) dot += gr[j] * yr[j];
        double* gxr = gx + r * cols;
        for (Index j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
      }
    });
  }
  return res;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
  const Index c = x.extent(-1);
  if (gamma.rank() != 1 || gamma.extent(0) != c || beta.rank() != 1 || beta.extent(0) != c) {
    throw ShapeError("layer_norm: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  const Index rows = x.size() / c;
  DVec out(static_cast<std::size_t>(x.size()));
  const double* p = x.data();
  const double* pg = gamma.data();
  const double* pbt = beta.data();
  for (Index r = 0; r < rows; ++r) {
    const double* row = p + r * c;
    double* orow = out.data() + r * c;
    double mean = 0.0;
    for (Index j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (Index j = 0; j < c; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Index j = 0; j < c; ++j) orow[j] = (row[j] - mean) * inv * pg[j] + pbt[j];
  }
  Tape* tape = result_tape(x, gamma);
  if (beta.tracked()) {
    Tape* tb = result_tape(beta);
    if (tape && tape != tb) throw Error("operands live on different tapes");
    tape = tape ? tape : tb;
  }
  Tensor res = make_out(tape, x.shape(), std::move(out));
  check_finite(res, "layer_norm");
  if (tape) {
    const int nx = x.tracked() ? x.node() : -1;
    const int ng = gamma.tracked() ? gamma.node() : -1;
    const int nb = beta.tracked() ? beta.node() : -1;
    const int no = res.node();
    tape->record([nx, ng, nb, no, rows, c, eps, x, gamma](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      const double* g = go->data();
      const double* p = x.data();
      const double* pg = gamma.data();
      double* gx = nx >= 0 ? t.grad(nx).data() : nullptr;
      double* gg = ng >= 0 ? t.grad(ng).data() : nullptr;
      double* gb = nb >= 0 ? t.grad(nb).data() : nullptr;
      std::vector<double> xhat(static_cast<std::size_t>(c));
      for (Index r = 0; r < rows; ++r) {
        const double* row = p + r * c;
        const double* gr = g + r * c;
        double mean = 0.0;
        for (Index j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (Index j = 0; j < c; ++j) {
          const double d = row[j] - mean;
          var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (Index j = 0; j < c; ++j) xhat[static_cast<std::size_t>(j)] = (row[j] - mean) * inv;
        if (gb) {
          for (Index j = 0; j < c; ++j) gb[j] += gr[j];
        }
        if (gg) {
          for (Index j = 0; j < c; ++j) gg[j] += gr[j] * xhat[static_cast<std::size_t>(j)];
        }
        if (gx) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (Index j = 0; j < c; ++j) {
            const double gj = gr[j] * pg[j];
            sum_g += gj;
            sum_gx += gj * xhat[static_cast<std::size_t>(j)];
          }
          const double invc = 1.0 / static_cast<double>(c);
          double* gxr = gx + r * c;
          for (Index j = 0; j < c; ++j) {
            const double gj = gr[j] * pg[j];
            gxr[j] += (gj - sum_g * invc - xhat[static_cast<std::size_t>(j)] * sum_gx * invc) * inv;
          }
        }
      }
    });
  }
  return res;
}

namespace {

// Decomposes a shape around `axis` into [outer, axis extent, inner].
void axis_split(const Shape& shape, int axis, Index* outer, Index* count, Index* inner) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("reduction axis out of range for " + shape_str(shape));
  Index o = 1, in = 1;
  for (int i = 0; i < axis; ++i) o *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) in *= shape[static_cast<std::size_t>(i)];
  *outer = o;
  *count = shape[static_cast<std::size_t>(axis)];
  *inner = in;
}

Shape reduced_shape(const Shape& shape, int axis, bool keepdims) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  Shape out;
  for (int i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(shape[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

}  // namespace

Tensor mean_axis(const Tensor& x, int axis, bool keepdims) {
  Index outer, count, inner;
  axis_split(x.shape(), axis, &outer, &count, &inner);
  Shape oshape = reduced_shape(x.shape(), axis, keepdims);
  DVec out(static_cast<std::size_t>(outer * inner), 0.0);
  const double* p = x.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index a = 0; a < count; ++a) {
      const double* src = p + (o * count + a) * inner;
      double* dst = out.data() + o * inner;
      for (Index i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const double invc = 1.0 / static_cast<double>(count);
  for (auto& v : out) v *= invc;
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, std::move(oshape), std::move(out));
  check_finite(res, "mean_axis");
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, outer, count, inner, invc](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      for (Index o = 0; o < outer; ++o) {
        for (Index a = 0; a < count; ++a) {
          double* dst = gx + (o * count + a) * inner;
          const double* src = g + o * inner;
          for (Index i = 0; i < inner; ++i) dst[i] += src[i] * invc;
        }
      }
    });
  }
  return res;
}

Tensor var_axis(const Tensor& x, int axis, bool keepdims) {
  Tensor mu = mean_axis(x, axis, /*keepdims=*/true);
  Tensor d = sub(x, mu);
  return mean_axis(mul(d, d), axis, keepdims);
}

Tensor sum_all(const Tensor& x) {
  const Index n = x.size();
  const double* p = x.data();
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += p[i];
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, {}, {s});
  check_finite(res, "sum_all");
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, n](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double g = (*go)[0];
      for (Index i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return res;
}

Tensor mean_all(const Tensor& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  Tape* tape = result_tape(x);
  // Same element order; the result shares the buffer.
  Tensor res = tape ? tape->alias(std::move(shape), x) : x.aliased(std::move(shape));
  if (tape) {
    const int nx = x.node(), no = res.node();
    const Index n = x.size();
    tape->record([nx, no, n](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (go) t.accumulate(nx, go->data(), n);
    });
  }
  return res;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: perm rank mismatch");
  std::vector<char> seen(static_cast<std::size_t>(r), 0);
  Shape oshape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int ax = perm[static_cast<std::size_t>(i)];
    if (ax < 0 || ax >= r || seen[static_cast<std::size_t>(ax)]) {
      throw ShapeError("permute: invalid permutation");
    }
    seen[static_cast<std::size_t>(ax)] = 1;
    oshape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(ax)];
  }
  auto xstrides = strides_of(x.shape());
  std::vector<Index> src_stride(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    src_stride[static_cast<std::size_t>(i)] = xstrides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const Index n = x.size();
  if (r == 0) return reshape(x, {});
  // Row-major walk of the output with a tight inner loop on the last axis.
  auto walk = [r, n, oshape, src_stride](auto&& per_row) {
    const auto rl = static_cast<std::size_t>(r - 1);
    const Index cols = oshape[rl];
    const Index inner = src_stride[rl];
    const Index rows = n / cols;
    std::vector<Index> c(static_cast<std::size_t>(r > 0 ? r - 1 : 0), 0);
    Index off = 0;
    for (Index row = 0; row < rows; ++row) {
      per_row(row * cols, off, cols, inner);
      for (int ax = r - 2; ax >= 0; --ax) {
        auto u = static_cast<std::size_t>(ax);
        ++c[u];
        off += src_stride[u];
        if (c[u] < oshape[u]) break;
        off -= src_stride[u] * oshape[u];
        c[u] = 0;
      }
    }
  };

  DVec out(static_cast<std::size_t>(n));
  const double* p = x.data();
  walk([&](Index start, Index off, Index cols, Index inner) {
    double* o = out.data() + start;
    for (Index j = 0; j < cols; ++j) o[j] = p[off + j * inner];
  });
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, oshape, std::move(out));
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, walk](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      walk([&](Index start, Index off, Index cols, Index inner) {
        const double* gr = g + start;
        for (Index j = 0; j < cols; ++j) gx[off + j * inner] += gr[j];
      });
    });
  }
  return res;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const int r = a.rank();
  if (b.rank() != r) throw ShapeError("concat: rank mismatch");
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
  Shape oshape = a.shape();
  for (int i = 0; i < r; ++i) {
    if (i == axis) continue;
    if (a.shape()[static_cast<std::size_t>(i)] != b.shape()[static_cast<std::size_t>(i)]) {
      throw ShapeError("concat: extents disagree outside axis: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
  }
  oshape[static_cast<std::size_t>(axis)] += b.shape()[static_cast<std::size_t>(axis)];

  Index outer, ca, inner;
  axis_split(a.shape(), axis, &outer, &ca, &inner);
  const Index cb = b.shape()[static_cast<std::size_t>(axis)];
  const Index slab_a = ca * inner, slab_b = cb * inner;
  DVec out(static_cast<std::size_t>(shape_size(oshape)));
  const double* pa = a.data();
  const double* pb = b.data();
  for (Index o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * (slab_a + slab_b), pa + o * slab_a,
                static_cast<std::size_t>(slab_a) * sizeof(double));
    std::memcpy(out.data() + o * (slab_a + slab_b) + slab_a, pb + o * slab_b,
                static_cast<std::size_t>(slab_b) * sizeof(double));
  }
  Tape* tape = result_tape(a, b);
  Tensor res = make_out(tape, std::move(oshape), std::move(out));
  if (tape) {
    const int na = a.tracked() ? a.node() : -1;
    const int nb = b.tracked() ? b.node() : -1;
    const int no = res.node();
    tape->record([na, nb, no, outer, slab_a, slab_b](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      const double* g = go->data();
      double* ga = na >= 0 ? t.grad(na).data() : nullptr;
      double* gb = nb >= 0 ? t.grad(nb).data() : nullptr;
      for (Index o = 0; o < outer; ++o) {
        const double* src = g + o * (slab_a + slab_b);
        if (ga) {
          for (Index i = 0; i < slab_a; ++i) ga[o * slab_a + i] += src[i];
        }
        if (gb) {
          for (Index i = 0; i < slab_b; ++i) gb[o * slab_b + i] += src[slab_a + i];
        }
      }
    });
  }
  return res;
}

namespace {

void check_token_shape(const Tensor& x, const char* op) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [B,S,C] tensor, got " + shape_str(x.shape()));
  }
}

std::vector<std::vector<Index>> replicate_indices(const std::vector<Index>& idx, Index batch) {
  return std::vector<std::vector<Index>>(static_cast<std::size_t>(batch), idx);
}

void validate_token_indices(const std::vector<std::vector<Index>>& idx, Index batch, Index s,
                            const char* op, bool require_distinct) {
  if (static_cast<Index>(idx.size()) != batch) {
    throw IndexError(std::string(op) + ": need one index set per sample");
  }
  const std::size_t d = idx.empty() ? 0 : idx[0].size();
  for (const auto& set : idx) {
    if (set.size() != d) throw IndexError(std::string(op) + ": ragged index sets");
    std::vector<char> seen(static_cast<std::size_t>(s), 0);
    for (Index v : set) {
      if (v < 0 || v >= s) {
        throw IndexError(std::string(op) + ": token index " + std::to_string(v) +
                         " out of range [0," + std::to_string(s) + ")");
      }
      if (require_distinct) {
        if (seen[static_cast<std::size_t>(v)]) {
          throw IndexError(std::string(op) + ": duplicate token index " + std::to_string(v));
        }
        seen[static_cast<std::size_t>(v)] = 1;
      }
    }
  }
}

}  // namespace

Tensor gather_tokens(const Tensor& x, const std::vector<Index>& indices) {
  check_token_shape(x, "gather_tokens");
  return gather_tokens(x, replicate_indices(indices, x.extent(0)));
}

Tensor gather_tokens(const Tensor& x, const std::vector<std::vector<Index>>& indices) {
  check_token_shape(x, "gather_tokens");
  const Index b = x.extent(0), s = x.extent(1), c = x.extent(2);
  validate_token_indices(indices, b, s, "gather_tokens", /*require_distinct=*/false);
  const Index d = indices.empty() ? 0 : static_cast<Index>(indices[0].size());
  if (d == 0) throw IndexError("gather_tokens: empty index set");
  DVec out(static_cast<std::size_t>(b * d * c));
  const double* p = x.data();
  for (Index i = 0; i < b; ++i) {
    for (Index j = 0; j < d; ++j) {
      const Index src = indices[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      std::memcpy(out.data() + (i * d + j) * c, p + (i * s + src) * c,
                  static_cast<std::size_t>(c) * sizeof(double));
    }
  }
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, {b, d, c}, std::move(out));
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, indices, b, s, c, d](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      for (Index i = 0; i < b; ++i) {
        for (Index j = 0; j < d; ++j) {
          const Index dst = indices[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          const double* src = g + (i * d + j) * c;
          double* out = gx + (i * s + dst) * c;
          for (Index q = 0; q < c; ++q) out[q] += src[q];
        }
      }
    });
  }
  return res;
}

Tensor scatter_tokens(const Tensor& x, const std::vector<std::vector<Index>>& indices,
                      const Tensor& values) {
  check_token_shape(x, "scatter_tokens");
  check_token_shape(values, "scatter_tokens");
  const Index b = x.extent(0), s = x.extent(1), c = x.extent(2);
  validate_token_indices(indices, b, s, "scatter_tokens", /*require_distinct=*/true);
  const Index d = indices.empty() ? 0 : static_cast<Index>(indices[0].size());
  if (values.extent(0) != b || values.extent(1) != d || values.extent(2) != c) {
    throw ShapeError("scatter_tokens: values shape " + shape_str(values.shape()) +
                     " does not match index sets");
  }
  DVec out(x.vec());
  const double* pv = values.data();
  for (Index i = 0; i < b; ++i) {
    for (Index j = 0; j < d; ++j) {
      const Index dst = indices[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      std::memcpy(out.data() + (i * s + dst) * c, pv + (i * d + j) * c,
                  static_cast<std::size_t>(c) * sizeof(double));
    }
  }
  Tape* tape = result_tape(x, values);
  Tensor res = make_out(tape, x.shape(), std::move(out));
  if (tape) {
    const int nx = x.tracked() ? x.node() : -1;
    const int nv = values.tracked() ? values.node() : -1;
    const int no = res.node();
    tape->record([nx, nv, no, indices, b, s, c, d](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      const double* g = go->data();
      if (nx >= 0) {
        // x receives the full output gradient except at replaced slots.
        auto& gx = t.grad(nx);
        std::vector<char> replaced(static_cast<std::size_t>(s));
        for (Index i = 0; i < b; ++i) {
          std::fill(replaced.begin(), replaced.end(), 0);
          for (Index j = 0; j < d; ++j) {
            replaced[static_cast<std::size_t>(
                indices[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])] = 1;
          }
          for (Index tok = 0; tok < s; ++tok) {
            if (replaced[static_cast<std::size_t>(tok)]) continue;
            const double* src = g + (i * s + tok) * c;
            double* dst = gx.data() + (i * s + tok) * c;
            for (Index q = 0; q < c; ++q) dst[q] += src[q];
          }
        }
      }
      if (nv >= 0) {
        auto& gv = t.grad(nv);
        for (Index i = 0; i < b; ++i) {
          for (Index j = 0; j < d; ++j) {
            const Index src_tok = indices[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            const double* src = g + (i * s + src_tok) * c;
            double* dst = gv.data() + (i * d + j) * c;
            for (Index q = 0; q < c; ++q) dst[q] += src[q];
          }
        }
      }
    });
  }
  return res;
}

Tensor gather_rows(const Tensor& x, const std::vector<Index>& rows) {
  if (x.rank() < 1) throw ShapeError("gather_rows: rank must be >= 1");
  const Index b = x.extent(0);
  const Index inner = x.size() / b;
  for (Index r : rows) {
    if (r < 0 || r >= b) throw IndexError("gather_rows: row " + std::to_string(r) + " out of range");
  }
  const Index nr = static_cast<Index>(rows.size());
  Shape oshape = x.shape();
  oshape[0] = nr;
  DVec out(static_cast<std::size_t>(nr * inner));
  const double* p = x.data();
  for (Index i = 0; i < nr; ++i) {
    std::memcpy(out.data() + i * inner, p + rows[static_cast<std::size_t>(i)] * inner,
                static_cast<std::size_t>(inner) * sizeof(double));
  }
  Tape* tape = result_tape(x);
  Tensor res = make_out(tape, std::move(oshape), std::move(out));
  if (tape) {
    const int nx = x.node(), no = res.node();
    tape->record([nx, no, rows, nr, inner](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      double* gx = t.grad(nx).data();
      const double* g = go->data();
      for (Index i = 0; i < nr; ++i) {
        double* dst = gx + rows[static_cast<std::size_t>(i)] * inner;
        const double* src = g + i * inner;
        for (Index q = 0; q < inner; ++q) dst[q] += src[q];
      }
    });
  }
  return res;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B,K]");
  const Index b = logits.extent(0), k = logits.extent(1);
  if (static_cast<Index>(labels.size()) != b) {
    throw ShapeError("cross_entropy: need one label per row");
  }
  for (int y : labels) {
    if (y < 0 || y >= k) throw IndexError("cross_entropy: label " + std::to_string(y) + " out of range");
  }
  const double* p = logits.data();
  DVec probs(static_cast<std::size_t>(b * k));
  double loss = 0.0;
  for (Index i = 0; i < b; ++i) {
    const double* row = p + i * k;
    double mx = row[0];
    for (Index j = 1; j < k; ++j) mx = row[j] > mx ? row[j] : mx;
    double sum = 0.0;
    for (Index j = 0; j < k; ++j) {
      probs[static_cast<std::size_t>(i * k + j)] = std::exp(row[j] - mx);
      sum += probs[static_cast<std::size_t>(i * k + j)];
    }
    const double inv = 1.0 / sum;
    for (Index j = 0; j < k; ++j) probs[static_cast<std::size_t>(i * k + j)] *= inv;
    loss += mx + std::log(sum) - row[labels[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(b);
  Tape* tape = result_tape(logits);
  Tensor res = make_out(tape, {}, {loss});
  check_finite(res, "cross_entropy");
  if (tape) {
    const int nx = logits.node(), no = res.node();
    tape->record([nx, no, probs, labels, b, k](Tape& t) {
      const auto* go = t.grad_if_any(no);
      if (!go) return;
      const double scale = (*go)[0] / static_cast<double>(b);
      double* gx = t.grad(nx).data();
      for (Index i = 0; i < b; ++i) {
        for (Index j = 0; j < k; ++j) {
          const double onehot = (j == labels[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
          gx[i * k + j] += scale * (probs[static_cast<std::size_t>(i * k + j)] - onehot);
        }
      }
    });
  }
  return res;
}

}  // namespace tfs::num
