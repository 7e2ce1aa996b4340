// SPDX-License-Identifier: Apache-2.0
#include "dpose/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "dpose/error.hpp"
#include "dpose/ops.hpp"

namespace dpose {

using Index = std::int64_t;
using detail::grad_target;
using detail::make_result;

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(a.shape()) + " vs target " + shape_str(b.shape()));
  }
}

std::vector<std::uint8_t> depth_mask(const Tensor& gt, std::span<const std::uint8_t> include) {
  const Index B = gt.dim(0), plane = gt.numel() / B;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(gt.numel()), 0);
  const auto g = gt.data();
  for (Index b = 0; b < B; ++b) {
    if (!include[static_cast<std::size_t>(b)]) continue;
    for (Index i = 0; i < plane; ++i) m[static_cast<std::size_t>(b * plane + i)] = g[static_cast<std::size_t>(b * plane + i)] > 0.0;
  }
  return m;
}

Tensor centre_on_pelvis(const Tensor& points, const Tensor& joints) {
  return sub(points, slice(joints, 1, 0, 1));
}

}  // namespace

Tensor masked_ssim(const Tensor& pred, const Tensor& gt, std::span<const std::uint8_t> include,
                   const SsimConfig& config) {
  require_same(pred, gt, "masked_ssim");
  if (pred.ndim() != 4 || pred.dim(1) != 1) throw ShapeError("masked_ssim: expected [B,1,h,w], got " + shape_str(pred.shape()));
  const Index B = pred.dim(0), H = pred.dim(2), W = pred.dim(3), plane = H * W;
  if (static_cast<Index>(include.size()) != B) throw ShapeError("masked_ssim: one include flag per sample required");
  const int r = config.window / 2;
  const auto mask = depth_mask(gt, include);
  const auto pd = pred.data(), gd = gt.data();
  auto x = [&](Index i) { return gd[static_cast<std::size_t>(i)]; };
  auto y = [&](Index i) { return mask[static_cast<std::size_t>(i)] ? pd[static_cast<std::size_t>(i)] : 0.0; };

  struct Window {
    Index b, y0, y1, x0, x1;
    double mx, my, dS_dmy, dS_dsxy, dS_dsyy;
  };
  std::vector<Window> windows;
  double total = 0.0;
  for (Index b = 0; b < B; ++b)
    for (Index cy = 0; cy < H; ++cy)
      for (Index cx = 0; cx < W; ++cx) {
        if (!mask[static_cast<std::size_t>(b * plane + cy * W + cx)]) continue;
        Window w{b, std::max<Index>(0, cy - r), std::min<Index>(H, cy + r + 1), std::max<Index>(0, cx - r),
                 std::min<Index>(W, cx + r + 1), 0, 0, 0, 0, 0};
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (Index i = w.y0; i < w.y1; ++i)
          for (Index j = w.x0; j < w.x1; ++j) {
            const Index p = b * plane + i * W + j;
            const double a = x(p), c = y(p);
            sx += a;
            sy += c;
            sxx += a * a;
            syy += c * c;
            sxy += a * c;
          }
        const double n = static_cast<double>((w.y1 - w.y0) * (w.x1 - w.x0));
        const double mx = sx / n, my = sy / n;
        const double vx = sxx / n - mx * mx, vy = syy / n - my * my, cxy = sxy / n - mx * my;
        const double A = 2 * mx * my + config.c1, Bn = 2 * cxy + config.c2;
        const double C = mx * mx + my * my + config.c1, D = vx + vy + config.c2;
        const double s = A * Bn / (C * D);
        total += s;
        w.mx = mx;
        w.my = my;
        w.dS_dmy = 2 * mx * Bn / (C * D) - s * 2 * my / C;
        w.dS_dsxy = 2 * A / (C * D);
        w.dS_dsyy = -s / D;
        windows.push_back(w);
      }
  if (windows.empty()) return Tensor::scalar(1.0);
  const double count = static_cast<double>(windows.size());
  auto shared = std::make_shared<std::vector<Window>>(std::move(windows));
  auto m = std::make_shared<std::vector<std::uint8_t>>(mask);
  return make_result("masked_ssim", {}, {total / count}, {pred}, [pred, gt, shared, m, count, W, plane](std::span<const double> g) {
    double* gp = grad_target(pred);
    if (!gp) return;
    const auto pd = pred.data(), gd = gt.data();
    const double scale = g[0] / count;
    for (const Window& w : *shared) {
      const double n = static_cast<double>((w.y1 - w.y0) * (w.x1 - w.x0));
      for (Index i = w.y0; i < w.y1; ++i)
        for (Index j = w.x0; j < w.x1; ++j) {
          const auto p = static_cast<std::size_t>(w.b * plane + i * W + j);
          if (!(*m)[p]) continue;
          const double yv = pd[p], xv = gd[p];
          gp[p] += scale * (w.dS_dmy + w.dS_dsxy * (xv - w.mx) + w.dS_dsyy * 2.0 * (yv - w.my)) / n;
        }
    }
  });
}

Tensor depth_loss(const Tensor& pred, const Tensor& gt, std::span<const std::uint8_t> include, double lambda_l1,
                  double lambda_ssim, const SsimConfig& config) {
  require_same(pred, gt, "depth_loss");
  if (pred.ndim() != 4 || static_cast<Index>(include.size()) != pred.dim(0)) {
    throw ShapeError("depth_loss: expected [B,1,h,w] maps and one include flag per sample");
  }
  const auto mask = depth_mask(gt, include);
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; })) return Tensor::scalar(0.0);
  const Tensor l1 = masked_mean(abs(sub(gt, pred)), mask);
  const Tensor ssim = masked_ssim(pred, gt, include, config);
  return add(scale(l1, lambda_l1), scale(add_scalar(scale(ssim, -1.0), 1.0), lambda_ssim));
}

Tensor segm_loss(const Tensor& logits, std::span<const std::int32_t> labels, double lambda) {
  return scale(cross_entropy_2d(logits, labels), lambda);
}

Tensor pose_loss(const Tensor& pred_rot, const Tensor& gt_rot) {
  require_same(pred_rot, gt_rot, "pose_loss");
  return mean(square(sub(pred_rot, gt_rot)));
}

Tensor shape_loss(const Tensor& pred_betas, const Tensor& gt_betas) {
  require_same(pred_betas, gt_betas, "shape_loss");
  return mean(square(sub(pred_betas, gt_betas)));
}

Tensor joints3d_loss(const Tensor& pred, const Tensor& gt) {
  require_same(pred, gt, "joints3d_loss");
  return mean(square(sub(centre_on_pelvis(pred, pred), centre_on_pelvis(gt, gt))));
}

Tensor joints2d_loss(const Tensor& pred, const Tensor& gt, std::span<const PerspectiveCamera> cams) {
  require_same(pred, gt, "joints2d_loss");
  const Index B = pred.dim(0);
  if (static_cast<Index>(cams.size()) != B) throw ShapeError("joints2d_loss: one camera per sample required");
  std::vector<double> inv(static_cast<std::size_t>(B));
  for (Index b = 0; b < B; ++b) {
    const auto& c = cams[static_cast<std::size_t>(b)];
    inv[static_cast<std::size_t>(b)] = 1.0 / std::max(c.width, c.height);
  }
  const Tensor norm = Tensor::from_vector({B, 1, 1}, std::move(inv));
  return mean(square(mul(sub(pred, gt), norm)));
}

Tensor vertices_loss(const Tensor& pred_verts, const Tensor& pred_joints, const Tensor& gt_verts,
                     const Tensor& gt_joints) {
  require_same(pred_verts, gt_verts, "vertices_loss");
  return mean(abs(sub(centre_on_pelvis(pred_verts, pred_joints), centre_on_pelvis(gt_verts, gt_joints))));
}

LossTerms total_loss(const PipelineOutput& pred, const BatchTargets& gt, const LossWeights& w) {
  LossTerms t;
  if (pred.depth.map.defined() && gt.depth.defined()) {
    t.depth = depth_loss(pred.depth.map, gt.depth, gt.has_depth, w.depth_l1, w.depth_ssim);
  } else {
    t.depth = Tensor::scalar(0.0);
  }
  t.segm = segm_loss(pred.parts.map, gt.parts, w.segm);
  t.pose = scale(pose_loss(pred.params.rotations, gt.rotations), w.pose);
  t.shape = scale(shape_loss(pred.params.betas, gt.betas), w.shape);
  t.j3d = scale(joints3d_loss(pred.joints3d, gt.joints3d), w.j3d);
  t.j2d = scale(joints2d_loss(pred.joints2d, gt.joints2d, gt.cams), w.j2d);
  t.v3d = scale(vertices_loss(pred.vertices, pred.joints3d, gt.vertices, gt.joints3d), w.v3d);
  t.total = add(add(add(t.depth, t.segm), add(t.pose, t.shape)), add(add(t.j3d, t.j2d), t.v3d));
  return t;
}

LossBreakdown breakdown(const LossTerms& t) {
  LossBreakdown b;
  b.depth = t.depth.item();
  b.segm = t.segm.item();
  b.pose = t.pose.item();
  b.shape = t.shape.item();
  b.j3d = t.j3d.item();
  b.j2d = t.j2d.item();
  b.v3d = t.v3d.item();
  b.total = t.total.item();
  return b;
}

std::string LossBreakdown::csv_header() { return "step,depth,segm,pose,shape,j3d,j2d,v3d,total"; }

std::string LossBreakdown::csv_row(std::int64_t step) const {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(step), depth, segm,
                pose, shape, j3d, j2d, v3d, total);
  return buf;
}

}  // namespace dpose
