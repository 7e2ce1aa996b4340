// SPDX-License-Identifier: Apache-2.0
#include "dpose/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpose/error.hpp"

namespace dpose {

std::int64_t RasterResult::foreground() const {
  return std::count_if(parts.begin(), parts.end(), [](std::int32_t l) { return l != 0; });
}

RasterResult rasterize(std::span<const double> vertices, std::span<const std::int32_t> faces,
                       std::span<const std::int32_t> vertex_labels, const PerspectiveCamera& cam, int out_h,
                       int out_w) {
  if (vertices.size() % 3 != 0 || faces.size() % 3 != 0) throw ShapeError("rasterize: vertices and faces must be triples");
  const std::size_t n = vertices.size() / 3;
  if (vertex_labels.size() != n) throw ShapeError("rasterize: one label per vertex required");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("rasterize: output size must be positive");
  // Crop cameras may have their principal point outside the crop, so only
  // the focal length and image size are checked here.
  if (!(cam.focal > 0.0) || cam.width <= 0 || cam.height <= 0) throw ConfigError("rasterize: invalid camera intrinsics");

  // Vertices in output-grid pixel coordinates.
  const double sx = static_cast<double>(out_w) / cam.width, sy = static_cast<double>(out_h) / cam.height;
  std::vector<double> px(n), py(n), pz(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double z = vertices[v * 3 + 2];
    if (z <= kZNear) {
      throw GeometryError("rasterize: vertex " + std::to_string(v) + " is behind the camera (z = " +
                          std::to_string(z) + ")");
    }
    px[v] = (cam.focal * vertices[v * 3] / z + cam.cx0) * sx;
    py[v] = (cam.focal * vertices[v * 3 + 1] / z + cam.cy0) * sy;
    pz[v] = z;
  }

  RasterResult r;
  r.height = out_h;
  r.width = out_w;
  const std::size_t pixels = static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w);
  r.depth.assign(pixels, 0.0);
  r.parts.assign(pixels, 0);
  r.face_ids.assign(pixels, -1);
  std::vector<double> zbuf(pixels, std::numeric_limits<double>::infinity());

  const std::size_t nf = faces.size() / 3;
  for (std::size_t f = 0; f < nf; ++f) {
    const auto i0 = static_cast<std::size_t>(faces[f * 3]), i1 = static_cast<std::size_t>(faces[f * 3 + 1]),
               i2 = static_cast<std::size_t>(faces[f * 3 + 2]);
    if (i0 >= n || i1 >= n || i2 >= n) throw ShapeError("rasterize: face " + std::to_string(f) + " index out of range");
    const double x0 = px[i0], y0 = py[i0], x1 = px[i1], y1 = py[i1], x2 = px[i2], y2 = py[i2];
    const double area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    if (std::fabs(area) < 1e-12) {
      ++r.degenerate_faces;
      continue;
    }
    const std::int32_t l0 = vertex_labels[i0], l1 = vertex_labels[i1], l2 = vertex_labels[i2];
    const std::int32_t label = (l1 == l2 && l1 != l0) ? l1 : l0;
    const double inv = 1.0 / area;
    const double iz0 = 1.0 / pz[i0], iz1 = 1.0 / pz[i1], iz2 = 1.0 / pz[i2];

    const int xmin = std::max(0, static_cast<int>(std::floor(std::min({x0, x1, x2}) - 0.5)));
    const int xmax = std::min(out_w - 1, static_cast<int>(std::ceil(std::max({x0, x1, x2}) - 0.5)));
    const int ymin = std::max(0, static_cast<int>(std::floor(std::min({y0, y1, y2}) - 0.5)));
    const int ymax = std::min(out_h - 1, static_cast<int>(std::ceil(std::max({y0, y1, y2}) - 0.5)));
    for (int y = ymin; y <= ymax; ++y) {
      const double cy = y + 0.5;
      for (int x = xmin; x <= xmax; ++x) {
        const double cx = x + 0.5;
        // Barycentric weights, normalised by the signed area so the inside
        // test does not depend on winding.
        const double w0 = ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) * inv;
        const double w1 = ((x2 - cx) * (y0 - cy) - (x0 - cx) * (y2 - cy)) * inv;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // Offsets from vertex 0 keep constant-depth triangles exact.
        const double z = 1.0 / (iz0 + w1 * (iz1 - iz0) + w2 * (iz2 - iz0));
        const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(x);
        if (z < zbuf[p]) {
          zbuf[p] = z;
          r.depth[p] = z;
          r.parts[p] = label;
          r.face_ids[p] = static_cast<std::int32_t>(f);
        }
      }
    }
  }
  return r;
}

NormalizedDepth normalize_depth(std::span<const double> raw) {
  NormalizedDepth out;
  out.depth.assign(raw.begin(), raw.end());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : raw) {
    if (v == 0.0) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo <= hi)) {
    out.all_background = true;
    return out;
  }
  for (double& v : out.depth) {
    if (v == 0.0) continue;
    v = hi > lo ? std::clamp(0.1 + 0.9 * (v - lo) / (hi - lo), 0.1, 1.0) : 0.55;
  }
  return out;
}

const std::array<std::array<std::uint8_t, 3>, 23>& part_palette() {
  static const std::array<std::array<std::uint8_t, 3>, 23> palette = {{
      {0, 0, 0},       {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},
      {145, 30, 180},  {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},
      {220, 190, 255}, {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195}, {128, 128, 0},
      {255, 215, 180}, {0, 0, 128},     {128, 128, 128}, {255, 255, 255}, {100, 60, 160},
  }};
  return palette;
}

}  // namespace dpose
