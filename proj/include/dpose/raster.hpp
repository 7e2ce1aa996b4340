// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dpose/camproj.hpp"

namespace dpose {

struct RasterResult {
  int height = 0, width = 0;
  std::vector<double> depth;           // camera-space z, 0 = background
  std::vector<std::int32_t> parts;     // 0 = background
  std::vector<std::int32_t> face_ids;  // -1 = background
  std::int64_t degenerate_faces = 0;   // zero-area triangles that were skipped
  std::int64_t foreground() const;
};

/// Z-buffer rasterisation of a triangle mesh (vertices N x 3 in camera space)
/// into an out_h x out_w grid covering the camera's image plane; the grid
/// may be coarser or finer than cam.width x cam.height. Pixel (x, y) samples
/// the point (x + 0.5, y + 0.5) of the grid. Depth is interpolated
/// perspective-correctly; each triangle carries the label held by the
/// majority of its vertices (its first vertex's when all three differ).
/// Throws GeometryError if any vertex has z <= z_near.
RasterResult rasterize(std::span<const double> vertices, std::span<const std::int32_t> faces,
                       std::span<const std::int32_t> vertex_labels, const PerspectiveCamera& cam, int out_h,
                       int out_w);

struct NormalizedDepth {
  std::vector<double> depth;
  bool all_background = false;
};

/// Background stays 0; foreground maps affinely so min -> 0.1, max -> 1.0.
/// A constant foreground maps to 0.55. An all-background map is returned
/// unchanged with all_background set.
NormalizedDepth normalize_depth(std::span<const double> raw);

/// Fixed colours for labels 0 (background, black) to 22.
const std::array<std::array<std::uint8_t, 3>, 23>& part_palette();

}  // namespace dpose
