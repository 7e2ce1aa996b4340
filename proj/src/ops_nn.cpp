// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <string>

#include "dpose/error.hpp"
#include "dpose/ops.hpp"
#include "dpose/parallel.hpp"
#include "gemm.hpp"

namespace dpose {

using detail::grad_target;
using detail::make_result;

namespace {

using Index = std::int64_t;

std::size_t sz(Index n) { return static_cast<std::size_t>(n); }

void require_rank(const Tensor& t, int rank, const char* op, const char* what) {
  if (t.ndim() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must be " + std::to_string(rank) + "-D, got " +
                     shape_str(t.shape()));
  }
}

struct ConvGeometry {
  Index batch, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  Index col_rows() const { return cin * kh * kw; }
  Index col_cols() const { return ho * wo; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (Index c = 0; c < g.cin; ++c)
    for (Index ki = 0; ki < g.kh; ++ki)
      for (Index kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.ho * g.wo;
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + iy) * g.w;
          for (Index ox = 0; ox < g.wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
}

void col2im(const ConvGeometry& g, const double* col, double* x) {
  for (Index c = 0; c < g.cin; ++c)
    for (Index ki = 0; ki < g.kh; ++ki)
      for (Index kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.ho * g.wo;
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = x + (c * g.h + iy) * g.w;
          const double* src = row + oy * g.wo;
          for (Index ox = 0; ox < g.wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_rank(bias, 1, "conv2d", "bias");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
                 stride,    padding,  0,         0};
  if (weight.dim(1) != g.cin) {
    throw ShapeError("conv2d: input channel dim 1 is " + std::to_string(g.cin) + " but weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != g.cout) {
    throw ShapeError("conv2d: bias dim 0 is " + std::to_string(bias.dim(0)) + ", expected " +
                     std::to_string(g.cout));
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  const Index in_plane = g.cin * g.h * g.w;
  const Index out_plane = g.cout * g.ho * g.wo;
  std::vector<double> out(sz(g.batch * out_plane));
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  const double* bd = bias.data().data();
  parallel_for(g.batch, [&](Index b) {
    double* yb = out.data() + b * out_plane;
    for (Index o = 0; o < g.cout; ++o) std::fill_n(yb + o * g.ho * g.wo, g.ho * g.wo, bd[o]);
    if (g.direct()) {
      detail::gemm_nn(g.cout, g.col_cols(), g.col_rows(), wd, xd + b * in_plane, yb);
    } else {
      std::vector<double> col(sz(g.col_rows() * g.col_cols()));
      im2col(g, xd + b * in_plane, col.data());
      detail::gemm_nn(g.cout, g.col_cols(), g.col_rows(), wd, col.data(), yb);
    }
  });

  Shape shape{g.batch, g.cout, g.ho, g.wo};
  return make_result("conv2d", std::move(shape), std::move(out), {x, weight, bias},
                     [x, weight, bias, g, in_plane, out_plane](std::span<const double> grad) {
                       double* gx = grad_target(x);
                       double* gw = grad_target(weight);
                       double* gb = grad_target(bias);
                       const double* xd = x.data().data();
                       const double* wd = weight.data().data();
                       const Index wsize = weight.numel();
                       // Per-sample weight gradients, reduced in sample order afterwards.
                       std::vector<double> gw_parts(gw ? sz(g.batch * wsize) : 0, 0.0);
                       parallel_for(g.batch, [&](Index b) {
                         const double* gy = grad.data() + b * out_plane;
                         std::vector<double> col;
                         const double* colp = xd + b * in_plane;
                         if (!g.direct()) {
                           col.resize(sz(g.col_rows() * g.col_cols()));
                           if (gw) im2col(g, xd + b * in_plane, col.data());
                           colp = col.data();
                         }
                         if (gw) detail::gemm_nt(g.cout, g.col_rows(), g.col_cols(), gy, colp, gw_parts.data() + b * wsize);
                         if (gx) {
                           if (g.direct()) {
                             detail::gemm_tn(g.col_rows(), g.col_cols(), g.cout, wd, gy, gx + b * in_plane);
                           } else {
                             std::fill(col.begin(), col.end(), 0.0);
                             detail::gemm_tn(g.col_rows(), g.col_cols(), g.cout, wd, gy, col.data());
                             col2im(g, col.data(), gx + b * in_plane);
                           }
                         }
                       });
                       if (gw) {
                         for (Index b = 0; b < g.batch; ++b) {
                           const double* part = gw_parts.data() + b * wsize;
                           for (Index i = 0; i < wsize; ++i) gw[i] += part[i];
                         }
                       }
                       if (gb) {
                         for (Index b = 0; b < g.batch; ++b)
                           for (Index o = 0; o < g.cout; ++o) {
                             const double* gy = grad.data() + b * out_plane + o * g.ho * g.wo;
                             double s = 0.0;
                             for (Index i = 0; i < g.ho * g.wo; ++i) s += gy[i];
                             gb[o] += s;
                           }
                       }
                     });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, Mode mode, BatchNormConfig config) {
  require_rank(x, 4, "batchnorm2d", "input");
  const Index batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->ndim() != 1 || t->dim(0) != channels) {
      throw ShapeError("batchnorm2d: per-channel parameter " + shape_str(t->shape()) + " does not match channel dim 1 = " +
                       std::to_string(channels));
    }
  }
  const Index count = batch * plane;
  if (mode == Mode::train && count < 2) {
    throw NumericError("batchnorm2d: train mode needs at least 2 values per channel (B*H*W = " +
                       std::to_string(count) + ")");
  }
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  auto mean = std::make_shared<std::vector<double>>(sz(channels));
  auto inv_std = std::make_shared<std::vector<double>>(sz(channels));
  if (mode == Mode::train) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (Index c = 0; c < channels; ++c) {
      double s = 0.0;
      for (Index b = 0; b < batch; ++b) {
        const double* p = xd.data() + (b * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double v = 0.0;
      for (Index b = 0; b < batch; ++b) {
        const double* p = xd.data() + (b * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / static_cast<double>(count);
      (*mean)[sz(c)] = mu;
      (*inv_std)[sz(c)] = 1.0 / std::sqrt(var + config.eps);
      rm[sz(c)] = (1.0 - config.momentum) * rm[sz(c)] + config.momentum * mu;
      rv[sz(c)] = (1.0 - config.momentum) * rv[sz(c)] +
                  config.momentum * var * static_cast<double>(count) / static_cast<double>(count - 1);
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (Index c = 0; c < channels; ++c) {
      (*mean)[sz(c)] = rm[sz(c)];
      (*inv_std)[sz(c)] = 1.0 / std::sqrt(rv[sz(c)] + config.eps);
    }
  }
  std::vector<double> out(xd.size());
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * plane;
      const double mu = (*mean)[sz(c)], is = (*inv_std)[sz(c)], ga = gd[sz(c)], be = bd[sz(c)];
      for (Index i = 0; i < plane; ++i) out[sz(off + i)] = ga * ((xd[sz(off + i)] - mu) * is) + be;
    }
  const bool train = mode == Mode::train;
  return make_result(
      "batchnorm2d", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean, inv_std, train, batch, channels, plane, count](std::span<const double> g) {
        double* gx = grad_target(x);
        double* gg = grad_target(gamma);
        double* gb = grad_target(beta);
        const auto xd = x.data();
        const auto gd = gamma.data();
        for (Index c = 0; c < channels; ++c) {
          const double mu = (*mean)[sz(c)], is = (*inv_std)[sz(c)];
          double sum_g = 0.0, sum_g_xhat = 0.0;
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * plane;
            for (Index i = 0; i < plane; ++i) {
              const double xhat = (xd[sz(off + i)] - mu) * is;
              sum_g += g[sz(off + i)];
              sum_g_xhat += g[sz(off + i)] * xhat;
            }
          }
          if (gg) gg[c] += sum_g_xhat;
          if (gb) gb[c] += sum_g;
          if (!gx) continue;
          const double ga = gd[sz(c)];
          const double inv_n = 1.0 / static_cast<double>(count);
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * plane;
            for (Index i = 0; i < plane; ++i) {
              if (train) {
                const double xhat = (xd[sz(off + i)] - mu) * is;
                gx[off + i] += ga * is * (g[sz(off + i)] - inv_n * sum_g - xhat * inv_n * sum_g_xhat);
              } else {
                gx[off + i] += ga * is * g[sz(off + i)];
              }
            }
          }
        }
      });
}

Tensor upsample_bilinear2x(const Tensor& x) {
  require_rank(x, 4, "upsample_bilinear2x", "input");
  const Index batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 1 || w < 1) throw ShapeError("upsample_bilinear2x: empty spatial dims");
  struct Tap {
    Index i0, i1;
    double l;
  };
  auto taps = [](Index in, Index out) {
    std::vector<Tap> t(sz(out));
    for (Index o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
      if (src < 0.0) src = 0.0;
      const Index i0 = std::min(static_cast<Index>(src), in - 1);
      const Index i1 = std::min(i0 + 1, in - 1);
      t[sz(o)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(h, 2 * h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(w, 2 * w));
  const Index oh = 2 * h, ow = 2 * w;
  std::vector<double> out(sz(batch * channels * oh * ow));
  const auto xd = x.data();
  for (Index p = 0; p < batch * channels; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      const Tap& a = (*ty)[sz(oy)];
      for (Index ox = 0; ox < ow; ++ox) {
        const Tap& b = (*tx)[sz(ox)];
        const double top = (1.0 - b.l) * src[a.i0 * w + b.i0] + b.l * src[a.i0 * w + b.i1];
        const double bot = (1.0 - b.l) * src[a.i1 * w + b.i0] + b.l * src[a.i1 * w + b.i1];
        dst[oy * ow + ox] = (1.0 - a.l) * top + a.l * bot;
      }
    }
  }
  return make_result("upsample_bilinear2x", {batch, channels, oh, ow}, std::move(out), {x},
                     [x, ty, tx, batch, channels, h, w, oh, ow](std::span<const double> g) {
                       double* gx = grad_target(x);
                       for (Index p = 0; p < batch * channels; ++p) {
                         double* dst = gx + p * h * w;
                         const double* src = g.data() + p * oh * ow;
                         for (Index oy = 0; oy < oh; ++oy) {
                           const Tap& a = (*ty)[sz(oy)];
                           for (Index ox = 0; ox < ow; ++ox) {
                             const Tap& b = (*tx)[sz(ox)];
                             const double v = src[oy * ow + ox];
                             dst[a.i0 * w + b.i0] += (1.0 - a.l) * (1.0 - b.l) * v;
                             dst[a.i0 * w + b.i1] += (1.0 - a.l) * b.l * v;
                             dst[a.i1 * w + b.i0] += a.l * (1.0 - b.l) * v;
                             dst[a.i1 * w + b.i1] += a.l * b.l * v;
                           }
                         }
                       }
                     });
}

Tensor spatial_softmax(const Tensor& x) {
  require_rank(x, 4, "spatial_softmax", "input");
  const Index planes = x.dim(0) * x.dim(1), n = x.dim(2) * x.dim(3);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (Index p = 0; p < planes; ++p) {
    const double* src = xd.data() + p * n;
    double* dst = out.data() + p * n;
    const double mx = *std::max_element(src, src + n);
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += (dst[i] = std::exp(src[i] - mx));
    const double inv = 1.0 / s;
    for (Index i = 0; i < n; ++i) dst[i] *= inv;
  }
  const bool rec = detail::recording({x});
  auto y = std::make_shared<std::vector<double>>(rec ? out : std::vector<double>{});
  return make_result("spatial_softmax", x.shape(), std::move(out), {x}, [x, y, planes, n](std::span<const double> g) {
    double* gx = grad_target(x);
    for (Index p = 0; p < planes; ++p) {
      const double* yp = y->data() + p * n;
      const double* gp = g.data() + p * n;
      double dot = 0.0;
      for (Index i = 0; i < n; ++i) dot += gp[i] * yp[i];
      for (Index i = 0; i < n; ++i) gx[p * n + i] += yp[i] * (gp[i] - dot);
    }
  });
}

Tensor contract_attention(const Tensor& attn, const Tensor& feat) {
  require_rank(attn, 3, "contract_attention", "attention");
  require_rank(feat, 3, "contract_attention", "features");
  const Index batch = attn.dim(0), parts = attn.dim(1), cells = attn.dim(2), channels = feat.dim(1);
  if (feat.dim(0) != batch) throw ShapeError("contract_attention: batch dim 0 differs");
  if (feat.dim(2) != cells) {
    throw ShapeError("contract_attention: spatial dim 2 differs (" + std::to_string(cells) + " vs " +
                     std::to_string(feat.dim(2)) + ")");
  }
  std::vector<double> out(sz(batch * parts * channels), 0.0);
  const double* ad = attn.data().data();
  const double* fd = feat.data().data();
  parallel_for(batch, [&](Index b) {
    detail::gemm_nt(parts, channels, cells, ad + b * parts * cells, fd + b * channels * cells,
                    out.data() + b * parts * channels);
  });
  return make_result("contract_attention", {batch, parts, channels}, std::move(out), {attn, feat},
                     [attn, feat, batch, parts, cells, channels](std::span<const double> g) {
                       double* ga = grad_target(attn);
                       double* gf = grad_target(feat);
                       const double* ad = attn.data().data();
                       const double* fd = feat.data().data();
                       parallel_for(batch, [&](Index b) {
                         const double* gb = g.data() + b * parts * channels;
                         if (ga) detail::gemm_nn(parts, cells, channels, gb, fd + b * channels * cells, ga + b * parts * cells);
                         if (gf) detail::gemm_tn(channels, cells, parts, gb, ad + b * parts * cells, gf + b * channels * cells);
                       });
                     });
}

Tensor cross_entropy_2d(const Tensor& logits, std::span<const std::int32_t> labels) {
  require_rank(logits, 4, "cross_entropy_2d", "logits");
  const Index batch = logits.dim(0), classes = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (static_cast<Index>(labels.size()) != batch * plane) {
    throw ShapeError("cross_entropy_2d: expected " + std::to_string(batch * plane) + " labels, got " +
                     std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ShapeError("cross_entropy_2d: label " + std::to_string(labels[i]) + " at pixel " + std::to_string(i) +
                       " outside [0," + std::to_string(classes) + ")");
    }
  }
  const auto ld = logits.data();
  auto lse = std::make_shared<std::vector<double>>(sz(batch * plane));
  double total = 0.0;
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < plane; ++i) {
      const double* base = ld.data() + b * classes * plane + i;
      double mx = base[0];
      for (Index c = 1; c < classes; ++c) mx = std::max(mx, base[c * plane]);
      double s = 0.0;
      for (Index c = 0; c < classes; ++c) s += std::exp(base[c * plane] - mx);
      const double l = mx + std::log(s);
      (*lse)[sz(b * plane + i)] = l;
      total += l - base[labels[sz(b * plane + i)] * plane];
    }
  const double inv = 1.0 / static_cast<double>(batch * plane);
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  return make_result("cross_entropy_2d", {}, {total * inv}, {logits},
                     [logits, lse, lab = std::move(lab), batch, classes, plane, inv](std::span<const double> g) {
                       double* gl = grad_target(logits);
                       const auto ld = logits.data();
                       for (Index b = 0; b < batch; ++b)
                         for (Index i = 0; i < plane; ++i) {
                           const double l = (*lse)[sz(b * plane + i)];
                           for (Index c = 0; c < classes; ++c) {
                             const Index off = b * classes * plane + c * plane + i;
                             double p = std::exp(ld[sz(off)] - l);
                             if (c == lab[sz(b * plane + i)]) p -= 1.0;
                             gl[off] += g[0] * inv * p;
                           }
                         }
                     });
}

Tensor multilinear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "multilinear", "input");
  require_rank(weight, 3, "multilinear", "weight");
  require_rank(bias, 2, "multilinear", "bias");
  const Index batch = x.dim(0), heads = x.dim(1), in = x.dim(2), out_dim = weight.dim(2);
  if (weight.dim(0) != heads || weight.dim(1) != in) {
    throw ShapeError("multilinear: weight " + shape_str(weight.shape()) + " does not match input " +
                     shape_str(x.shape()));
  }
  if (bias.dim(0) != heads || bias.dim(1) != out_dim) {
    throw ShapeError("multilinear: bias " + shape_str(bias.shape()) + " does not match heads/outputs");
  }
  const auto xd = x.data();
  const auto wd = weight.data();
  const auto bd = bias.data();
  std::vector<double> out(sz(batch * heads * out_dim));
  for (Index b = 0; b < batch; ++b)
    for (Index j = 0; j < heads; ++j) {
      double* y = out.data() + (b * heads + j) * out_dim;
      for (Index o = 0; o < out_dim; ++o) y[o] = bd[sz(j * out_dim + o)];
      const double* xr = xd.data() + (b * heads + j) * in;
      const double* wj = wd.data() + j * in * out_dim;
      for (Index d = 0; d < in; ++d)
        for (Index o = 0; o < out_dim; ++o) y[o] += xr[d] * wj[d * out_dim + o];
    }
  return make_result("multilinear", {batch, heads, out_dim}, std::move(out), {x, weight, bias},
                     [x, weight, bias, batch, heads, in, out_dim](std::span<const double> g) {
                       double* gx = grad_target(x);
                       double* gw = grad_target(weight);
                       double* gb = grad_target(bias);
                       const auto xd = x.data();
                       const auto wd = weight.data();
                       for (Index b = 0; b < batch; ++b)
                         for (Index j = 0; j < heads; ++j) {
                           const double* gy = g.data() + (b * heads + j) * out_dim;
                           const double* xr = xd.data() + (b * heads + j) * in;
                           if (gb)
                             for (Index o = 0; o < out_dim; ++o) gb[j * out_dim + o] += gy[o];
                           for (Index d = 0; d < in; ++d)
                             for (Index o = 0; o < out_dim; ++o) {
                               if (gx) gx[(b * heads + j) * in + d] += gy[o] * wd[sz((j * in + d) * out_dim + o)];
                               if (gw) gw[(j * in + d) * out_dim + o] += xr[d] * gy[o];
                             }
                         }
                     });
}

}  // namespace dpose
