// SPDX-License-Identifier: Apache-2.0
#include "dpose/camproj.hpp"

#include <string>

#include "dpose/error.hpp"

namespace dpose {

using detail::grad_target;
using detail::make_result;
using Index = std::int64_t;

namespace {

std::size_t sz(Index n) { return static_cast<std::size_t>(n); }

[[noreturn]] void behind_camera(Index sample, Index point, double z) {
  throw GeometryError("project: point " + std::to_string(point) + " of sample " + std::to_string(sample) +
                      " has z = " + std::to_string(z) + " <= z_near");
}

}  // namespace

void validate_camera(const PerspectiveCamera& cam) {
  if (!(cam.focal > 0.0)) throw ConfigError("camera: focal must be positive");
  if (cam.width <= 0 || cam.height <= 0) throw ConfigError("camera: image size must be positive");
  if (cam.cx0 < 0.0 || cam.cx0 > cam.width || cam.cy0 < 0.0 || cam.cy0 > cam.height) {
    throw ConfigError("camera: principal point outside the image");
  }
}

std::vector<Vec2> project(const PerspectiveCamera& cam, std::span<const Vec3> points, double z_near) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (p[2] <= z_near) behind_camera(0, static_cast<Index>(i), p[2]);
    out.push_back({cam.focal * p[0] / p[2] + cam.cx0, cam.focal * p[1] / p[2] + cam.cy0});
  }
  return out;
}

Vec3 crop_to_full_translation(const CropCamera& crop, const BBox& bbox, const PerspectiveCamera& cam) {
  const double sb = crop.s * bbox.size;
  if (!(sb > 0.0)) throw GeometryError("crop_to_full_translation: s * b must be positive");
  return {crop.tx + 2.0 * (bbox.cx - cam.cx0) / sb, crop.ty + 2.0 * (bbox.cy - cam.cy0) / sb, 2.0 * cam.focal / sb};
}

std::array<double, 3> encode_bbox(const BBox& bbox, const PerspectiveCamera& cam) {
  return {(bbox.cx - cam.cx0) / cam.focal, (bbox.cy - cam.cy0) / cam.focal, bbox.size / cam.focal};
}

BBox decode_bbox(const std::array<double, 3>& code, const PerspectiveCamera& cam) {
  return {code[0] * cam.focal + cam.cx0, code[1] * cam.focal + cam.cy0, code[2] * cam.focal};
}

Tensor project(const Tensor& points, std::span<const PerspectiveCamera> cams, double z_near) {
  if (points.ndim() != 3 || points.dim(2) != 3) {
    throw ShapeError("project: points must be [B,P,3], got " + shape_str(points.shape()));
  }
  const Index B = points.dim(0), P = points.dim(1);
  if (static_cast<Index>(cams.size()) != B) throw ShapeError("project: need one camera per batch element");
  const auto x = points.data();
  std::vector<double> out(sz(B * P * 2));
  for (Index b = 0; b < B; ++b) {
    const auto& c = cams[sz(b)];
    for (Index p = 0; p < P; ++p) {
      const double* q = x.data() + (b * P + p) * 3;
      if (q[2] <= z_near) behind_camera(b, p, q[2]);
      out[sz((b * P + p) * 2)] = c.focal * q[0] / q[2] + c.cx0;
      out[sz((b * P + p) * 2 + 1)] = c.focal * q[1] / q[2] + c.cy0;
    }
  }
  std::vector<double> focal(sz(B));
  for (Index b = 0; b < B; ++b) focal[sz(b)] = cams[sz(b)].focal;
  return make_result("project", {B, P, 2}, std::move(out), {points},
                     [points, focal = std::move(focal), B, P](std::span<const double> g) {
                       double* gp = grad_target(points);
                       const auto x = points.data();
                       for (Index b = 0; b < B; ++b)
                         for (Index p = 0; p < P; ++p) {
                           const double* q = x.data() + (b * P + p) * 3;
                           const double gu = g[sz((b * P + p) * 2)], gv = g[sz((b * P + p) * 2 + 1)];
                           const double f = focal[sz(b)], iz = 1.0 / q[2];
                           double* d = gp + (b * P + p) * 3;
                           d[0] += gu * f * iz;
                           d[1] += gv * f * iz;
                           d[2] -= (gu * q[0] + gv * q[1]) * f * iz * iz;
                         }
                     });
}

Tensor crop_to_full_translation(const Tensor& crop, std::span<const BBox> bboxes,
                                std::span<const PerspectiveCamera> cams) {
  if (crop.ndim() != 2 || crop.dim(1) != 3) {
    throw ShapeError("crop_to_full_translation: crop must be [B,3], got " + shape_str(crop.shape()));
  }
  const Index B = crop.dim(0);
  if (static_cast<Index>(bboxes.size()) != B || static_cast<Index>(cams.size()) != B) {
    throw ShapeError("crop_to_full_translation: need one bbox and camera per batch element");
  }
  // Per sample: t = (tx + a/s, ty + c/s, e/s) with a, c, e fixed by bbox and camera.
  std::vector<double> coef(sz(B * 3));
  std::vector<double> out(sz(B * 3));
  const auto cd = crop.data();
  for (Index b = 0; b < B; ++b) {
    const BBox& bb = bboxes[sz(b)];
    const PerspectiveCamera& c = cams[sz(b)];
    const double s = cd[sz(b * 3)];
    if (!(s * bb.size > 0.0)) {
      throw GeometryError("crop_to_full_translation: s * b must be positive (sample " + std::to_string(b) + ")");
    }
    coef[sz(b * 3)] = 2.0 * (bb.cx - c.cx0) / bb.size;
    coef[sz(b * 3 + 1)] = 2.0 * (bb.cy - c.cy0) / bb.size;
    coef[sz(b * 3 + 2)] = 2.0 * c.focal / bb.size;
    out[sz(b * 3)] = cd[sz(b * 3 + 1)] + coef[sz(b * 3)] / s;
    out[sz(b * 3 + 1)] = cd[sz(b * 3 + 2)] + coef[sz(b * 3 + 1)] / s;
    out[sz(b * 3 + 2)] = coef[sz(b * 3 + 2)] / s;
  }
  return make_result("crop_to_full_translation", {B, 3}, std::move(out), {crop},
                     [crop, coef = std::move(coef), B](std::span<const double> g) {
                       double* gc = grad_target(crop);
                       const auto cd = crop.data();
                       for (Index b = 0; b < B; ++b) {
                         const double s = cd[sz(b * 3)];
                         double ds = 0.0;
                         for (int i = 0; i < 3; ++i) ds -= g[sz(b * 3 + i)] * coef[sz(b * 3 + i)] / (s * s);
                         gc[b * 3] += ds;
                         gc[b * 3 + 1] += g[sz(b * 3)];
                         gc[b * 3 + 2] += g[sz(b * 3 + 1)];
                       }
                     });
}

}  // namespace dpose
