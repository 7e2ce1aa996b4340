// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <string>

#include "dpose/error.hpp"
#include "dpose/ops.hpp"
#include "gemm.hpp"

namespace dpose {

using detail::grad_target;
using detail::make_result;

namespace {

using Index = std::int64_t;

std::size_t sz(Index n) { return static_cast<std::size_t>(n); }

// Maps every output element of a broadcast binary op to its source offsets.
struct Broadcast {
  Shape shape;
  std::vector<Index> a_index, b_index;
  bool same = false;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast r;
  if (a == b) {
    r.shape = a;
    r.same = true;
    return r;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  r.shape.assign(rank, 1);
  std::vector<Index> sa(rank, 0), sb(rank, 0);  // strides, 0 where broadcast
  Index stride_a = 1, stride_b = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ax = rank - 1 - i;
    const Index da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const Index db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                       " at dim " + std::to_string(ax));
    }
    r.shape[ax] = std::max(da, db);
    sa[ax] = da == 1 ? 0 : stride_a;
    sb[ax] = db == 1 ? 0 : stride_b;
    stride_a *= da;
    stride_b *= db;
  }
  const Index n = shape_numel(r.shape);
  r.a_index.resize(sz(n));
  r.b_index.resize(sz(n));
  std::vector<Index> counter(rank, 0);
  Index ia = 0, ib = 0;
  for (Index i = 0; i < n; ++i) {
    r.a_index[sz(i)] = ia;
    r.b_index[sz(i)] = ib;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (counter[ax] < r.shape[ax]) break;
      ia -= sa[ax] * counter[ax];
      ib -= sb[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return r;
}

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  auto bc = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), name));
  const Index n = shape_numel(bc->shape);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(sz(n));
  for (Index i = 0; i < n; ++i) {
    const double x = ad[sz(bc->same ? i : bc->a_index[sz(i)])];
    const double y = bd[sz(bc->same ? i : bc->b_index[sz(i)])];
    switch (op) {
      case BinOp::add: out[sz(i)] = x + y; break;
      case BinOp::sub: out[sz(i)] = x - y; break;
      case BinOp::mul: out[sz(i)] = x * y; break;
      case BinOp::div: out[sz(i)] = x / y; break;
    }
  }
  Shape shape = bc->shape;
  return make_result(name, std::move(shape), std::move(out), {a, b}, [a, b, bc, op, n](std::span<const double> g) {
    double* ga = grad_target(a);
    double* gb = grad_target(b);
    const auto ad = a.data();
    const auto bd = b.data();
    for (Index i = 0; i < n; ++i) {
      const Index ia = bc->same ? i : bc->a_index[sz(i)];
      const Index ib = bc->same ? i : bc->b_index[sz(i)];
      const double gi = g[sz(i)];
      switch (op) {
        case BinOp::add:
          if (ga) ga[ia] += gi;
          if (gb) gb[ib] += gi;
          break;
        case BinOp::sub:
          if (ga) ga[ia] += gi;
          if (gb) gb[ib] -= gi;
          break;
        case BinOp::mul:
          if (ga) ga[ia] += gi * bd[sz(ib)];
          if (gb) gb[ib] += gi * ad[sz(ia)];
          break;
        case BinOp::div: {
          const double y = bd[sz(ib)];
          if (ga) ga[ia] += gi / y;
          if (gb) gb[ib] -= gi * ad[sz(ia)] / (y * y);
          break;
        }
      }
    }
  });
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& x, const char* name, F f, D dfdx) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  const bool rec = detail::recording({x});
  auto y = std::make_shared<std::vector<double>>(rec ? out : std::vector<double>{});
  return make_result(name, x.shape(), std::move(out), {x}, [x, y, dfdx](std::span<const double> g) {
    double* gx = grad_target(x);
    const auto xd = x.data();
    for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += g[i] * dfdx(xd[i], (*y)[i]);
  });
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  return a;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div, "div"); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  // d|x|/dx at 0 taken as 0.
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("sum", {}, {s}, {x}, [x](std::span<const double> g) {
    double* gx = grad_target(x);
    for (Index i = 0; i < x.numel(); ++i) gx[i] += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor masked_mean(const Tensor& x, std::span<const std::uint8_t> mask) {
  if (static_cast<Index>(mask.size()) != x.numel()) {
    throw ShapeError("masked_mean: mask length " + std::to_string(mask.size()) + " vs tensor " + shape_str(x.shape()));
  }
  Index count = 0;
  double s = 0.0;
  const auto xd = x.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      s += xd[i];
      ++count;
    }
  }
  if (count == 0) return Tensor::scalar(0.0);
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_result("masked_mean", {}, {s * inv}, {x}, [x, keep = std::move(keep), inv](std::span<const double> g) {
    double* gx = grad_target(x);
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) gx[i] += g[0] * inv;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [x](std::span<const double> g) {
    double* gx = grad_target(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const int ax = normalize_axis(axis, static_cast<int>(first.size()), "concat");
  Shape shape = first;
  shape[sz(ax)] = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch at input " + std::to_string(p));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != ax && s[d] != first[d]) {
        throw ShapeError("concat: input " + std::to_string(p) + " has extent " + std::to_string(s[d]) + " at dim " +
                         std::to_string(d) + ", expected " + std::to_string(first[d]));
      }
    }
    shape[sz(ax)] += s[sz(ax)];
  }
  Index outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= first[sz(d)];
  for (std::size_t d = sz(ax) + 1; d < first.size(); ++d) inner *= first[d];
  const Index total_axis = shape[sz(ax)];
  std::vector<double> out(sz(shape_numel(shape)));
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const Index len = p.shape()[sz(ax)];
    const auto pd = p.data();
    for (Index o = 0; o < outer; ++o)
      std::copy_n(pd.begin() + o * len * inner, len * inner, out.begin() + (o * total_axis + offset) * inner);
    offset += len;
  }
  return make_result("concat", std::move(shape), std::move(out), parts,
                     [parts, offsets, ax, outer, inner, total_axis](std::span<const double> g) {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         double* gp = grad_target(parts[k]);
                         if (!gp) continue;
                         const Index len = parts[k].shape()[sz(ax)];
                         for (Index o = 0; o < outer; ++o) {
                           const double* src = g.data() + (o * total_axis + offsets[k]) * inner;
                           double* dst = gp + o * len * inner;
                           for (Index i = 0; i < len * inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, Index begin, Index end) {
  const Shape& s = x.shape();
  const int ax = normalize_axis(axis, static_cast<int>(s.size()), "slice");
  if (begin < 0 || end > s[sz(ax)] || begin > end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for dim " +
                     std::to_string(ax) + " of extent " + std::to_string(s[sz(ax)]));
  }
  Shape shape = s;
  shape[sz(ax)] = end - begin;
  Index outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= s[sz(d)];
  for (std::size_t d = sz(ax) + 1; d < s.size(); ++d) inner *= s[d];
  const Index full = s[sz(ax)], len = end - begin;
  std::vector<double> out(sz(outer * len * inner));
  const auto xd = x.data();
  for (Index o = 0; o < outer; ++o)
    std::copy_n(xd.begin() + (o * full + begin) * inner, len * inner, out.begin() + o * len * inner);
  return make_result("slice", std::move(shape), std::move(out), {x},
                     [x, outer, inner, full, len, begin](std::span<const double> g) {
                       double* gx = grad_target(x);
                       for (Index o = 0; o < outer; ++o) {
                         const double* src = g.data() + o * len * inner;
                         double* dst = gx + (o * full + begin) * inner;
                         for (Index i = 0; i < len * inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul: expects 2-D operands");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dims differ (" + std::to_string(k) + " vs " + std::to_string(b.dim(0)) + ")");
  }
  std::vector<double> out(sz(m * n), 0.0);
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, n, k](std::span<const double> g) {
    if (double* ga = grad_target(a)) detail::gemm_nt(m, k, n, g.data(), b.data().data(), ga);
    if (double* gb = grad_target(b)) detail::gemm_tn(k, n, m, a.data().data(), g.data(), gb);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (bias.ndim() != 1 || weight.ndim() != 2 || bias.dim(0) != weight.dim(1)) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with bias " +
                     shape_str(bias.shape()));
  }
  return add(matmul(x, weight), bias);
}

Tensor apply_matrix(std::span<const double> matrix, Index rows, Index cols, const Tensor& x) {
  if (static_cast<Index>(matrix.size()) != rows * cols) throw ShapeError("apply_matrix: matrix size mismatch");
  if (x.ndim() != 3 || x.dim(1) != cols) {
    throw ShapeError("apply_matrix: input " + shape_str(x.shape()) + " needs dim 1 == " + std::to_string(cols));
  }
  const Index batch = x.dim(0), depth = x.dim(2);
  std::vector<double> out(sz(batch * rows * depth), 0.0);
  for (Index b = 0; b < batch; ++b)
    detail::gemm_nn(rows, depth, cols, matrix.data(), x.data().data() + b * cols * depth,
                    out.data() + b * rows * depth);
  auto mat = std::make_shared<std::vector<double>>(matrix.begin(), matrix.end());
  return make_result("apply_matrix", {batch, rows, depth}, std::move(out), {x},
                     [x, mat, rows, cols, batch, depth](std::span<const double> g) {
                       double* gx = grad_target(x);
                       for (Index b = 0; b < batch; ++b)
                         detail::gemm_tn(cols, depth, rows, mat->data(), g.data() + b * rows * depth,
                                         gx + b * cols * depth);
                     });
}

}  // namespace dpose
