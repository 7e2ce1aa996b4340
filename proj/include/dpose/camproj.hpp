// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "dpose/geometry.hpp"
#include "dpose/tensor.hpp"

namespace dpose {

inline constexpr double kZNear = 1e-4;

struct PerspectiveCamera {
  double focal = 200.0;
  double cx0 = 128.0, cy0 = 128.0;
  int width = 256, height = 256;
};

/// Weak-perspective camera of a square crop: crop coordinates in [-1, 1]
/// are s * (X + tx, Y + ty).
struct CropCamera {
  double s = 1.0, tx = 0.0, ty = 0.0;
};

struct BBox {
  double cx = 0.0, cy = 0.0;  // full-frame pixels
  double size = 1.0;          // side of the square crop
};

/// Checks focal > 0, principal point inside the image (ConfigError otherwise).
void validate_camera(const PerspectiveCamera& cam);

using Vec2 = std::array<double, 2>;

/// (f x / z + cx0, f y / z + cy0). Throws GeometryError naming the first
/// point with z <= z_near.
std::vector<Vec2> project(const PerspectiveCamera& cam, std::span<const Vec3> points, double z_near = kZNear);

/// Translation of the body relative to the full image's optical centre.
Vec3 crop_to_full_translation(const CropCamera& crop, const BBox& bbox, const PerspectiveCamera& cam);

/// Focal-normalised bbox: ((cx - cx0)/f, (cy - cy0)/f, b/f).
std::array<double, 3> encode_bbox(const BBox& bbox, const PerspectiveCamera& cam);
BBox decode_bbox(const std::array<double, 3>& code, const PerspectiveCamera& cam);

// Differentiable batched forms. One camera and bbox per batch element.

/// points [B,P,3] -> pixels [B,P,2].
Tensor project(const Tensor& points, std::span<const PerspectiveCamera> cams, double z_near = kZNear);

/// crop [B,3] holding (s, tx, ty) -> t_full [B,3].
Tensor crop_to_full_translation(const Tensor& crop, std::span<const BBox> bboxes,
                                std::span<const PerspectiveCamera> cams);

}  // namespace dpose
