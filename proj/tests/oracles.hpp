// SPDX-License-Identifier: Apache-2.0
// Brute-force reference implementations shared by unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dpose/camproj.hpp"

namespace dpose::oracle {

/// Coverage of each pixel of an out_h x out_w grid by the mesh, measured by
/// testing factor x factor sub-pixel samples against every triangle.
/// Returns the total covered area in pixel units.
inline double supersampled_coverage(std::span<const double> verts, std::span<const std::int32_t> faces,
                                    const PerspectiveCamera& cam, int out_h, int out_w, int factor) {
  const std::size_t n = verts.size() / 3;
  const double sx = static_cast<double>(out_w) / cam.width, sy = static_cast<double>(out_h) / cam.height;
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = (cam.focal * verts[i * 3] / verts[i * 3 + 2] + cam.cx0) * sx;
    v[i] = (cam.focal * verts[i * 3 + 1] / verts[i * 3 + 2] + cam.cy0) * sy;
  }
  const int H = out_h * factor, W = out_w * factor;
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(H) * W, 0);
  for (std::size_t f = 0; f + 2 < faces.size(); f += 3) {
    const auto a = static_cast<std::size_t>(faces[f]), b = static_cast<std::size_t>(faces[f + 1]),
               c = static_cast<std::size_t>(faces[f + 2]);
    if ((u[b] - u[a]) * (v[c] - v[a]) - (u[c] - u[a]) * (v[b] - v[a]) == 0.0) continue;
    // Only samples inside the triangle's bounding box can be hit.
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({v[a], v[b], v[c]}) * factor)) - 1);
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({v[a], v[b], v[c]}) * factor)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({u[a], u[b], u[c]}) * factor)) - 1);
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({u[a], u[b], u[c]}) * factor)) + 1);
    for (int y = y0; y <= y1; ++y) {
      const double py = (y + 0.5) / factor;
      for (int x = x0; x <= x1; ++x) {
        const double px = (x + 0.5) / factor;
        auto edge = [&](std::size_t i, std::size_t j) { return (u[j] - u[i]) * (py - v[i]) - (v[j] - v[i]) * (px - u[i]); };
        const double e0 = edge(a, b), e1 = edge(b, c), e2 = edge(c, a);
        if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) hit[static_cast<std::size_t>(y) * W + x] = 1;
      }
    }
  }
  double covered = 0.0;
  for (auto h : hit) covered += h;
  return covered / (factor * factor);
}

}  // namespace dpose::oracle
