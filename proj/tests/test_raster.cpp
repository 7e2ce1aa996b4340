// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dpose/body.hpp"
#include "dpose/error.hpp"
#include "dpose/image_io.hpp"
#include "dpose/raster.hpp"
#include "oracles.hpp"

using namespace dpose;

namespace {

const PerspectiveCamera kCam{.focal = 100, .cx0 = 16, .cy0 = 16, .width = 32, .height = 32};

// World point that projects to pixel (u, v) of kCam at depth z.
std::array<double, 3> unproject(double u, double v, double z) {
  return {(u - kCam.cx0) * z / kCam.focal, (v - kCam.cy0) * z / kCam.focal, z};
}

bool inside(double px, double py, const std::array<double, 6>& tri) {
  auto edge = [&](int i, int j) {
    return (tri[j * 2] - tri[i * 2]) * (py - tri[i * 2 + 1]) - (tri[j * 2 + 1] - tri[i * 2 + 1]) * (px - tri[i * 2]);
  };
  const double a = edge(0, 1), b = edge(1, 2), c = edge(2, 0);
  return (a >= 0 && b >= 0 && c >= 0) || (a <= 0 && b <= 0 && c <= 0);
}

}  // namespace

TEST_CASE("single fronto-parallel triangle") {
  const std::array<double, 6> tri{3.2, 4.1, 27.7, 9.3, 11.6, 25.4};
  std::vector<double> verts;
  for (int i = 0; i < 3; ++i) {
    const auto p = unproject(tri[i * 2], tri[i * 2 + 1], 2.0);
    verts.insert(verts.end(), p.begin(), p.end());
  }
  const std::vector<std::int32_t> faces{0, 1, 2}, labels{7, 7, 3};
  const auto r = rasterize(verts, faces, labels, kCam, 32, 32);
  int covered = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const bool in = inside(x + 0.5, y + 0.5, tri);
      const double d = r.depth[y * 32 + x];
      CHECK((in ? d == 2.0 : d == 0.0));
      CHECK(r.parts[y * 32 + x] == (in ? 7 : 0));
      covered += in;
    }
  CHECK(covered > 100);
  CHECK(r.foreground() == covered);
  CHECK(r.degenerate_faces == 0);
}

TEST_CASE("tilted triangle depth follows the plane") {
  const std::array<double, 9> p{-0.5, -0.4, 2.0, 0.6, -0.3, 3.5, 0.0, 0.7, 2.5};
  const std::vector<double> verts(p.begin(), p.end());
  const auto r = rasterize(verts, std::vector<std::int32_t>{0, 1, 2}, std::vector<std::int32_t>{1, 1, 1}, kCam, 32, 32);
  const Vec3 a{p[0], p[1], p[2]}, b{p[3], p[4], p[5]}, c{p[6], p[7], p[8]};
  const Vec3 n = cross(b - a, c - a);
  double worst = 0.0;
  int count = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (r.depth[y * 32 + x] == 0.0) continue;
      const Vec3 ray{(x + 0.5 - kCam.cx0) / kCam.focal, (y + 0.5 - kCam.cy0) / kCam.focal, 1.0};
      worst = std::max(worst, std::fabs(r.depth[y * 32 + x] - dot(n, a) / dot(n, ray)));
      ++count;
    }
  CHECK(count > 50);
  CHECK(worst < 1e-12);
}

TEST_CASE("z-buffer keeps the nearer surface") {
  std::vector<double> verts;
  for (double z : {2.0, 1.0}) {
    for (auto [u, v] : {std::pair{2.0, 2.0}, {30.0, 4.0}, {8.0, 30.0}}) {
      const auto p = unproject(u, v, z);
      verts.insert(verts.end(), p.begin(), p.end());
    }
  }
  const std::vector<std::int32_t> labels{2, 2, 2, 5, 5, 5};
  for (const auto& faces : {std::vector<std::int32_t>{0, 1, 2, 3, 4, 5}, std::vector<std::int32_t>{3, 4, 5, 0, 1, 2}}) {
    const auto r = rasterize(verts, faces, labels, kCam, 32, 32);
    for (std::size_t i = 0; i < r.depth.size(); ++i) {
      if (r.depth[i] == 0.0) continue;
      CHECK(r.depth[i] == 1.0);
      CHECK(r.parts[i] == 5);
    }
  }
}

TEST_CASE("degenerate triangles are skipped and counted") {
  std::vector<double> verts;
  for (auto [u, v] : {std::pair{2.0, 2.0}, {10.0, 10.0}, {20.0, 20.0}}) {
    const auto p = unproject(u, v, 2.0);
    verts.insert(verts.end(), p.begin(), p.end());
  }
  const auto r = rasterize(verts, std::vector<std::int32_t>{0, 1, 2}, std::vector<std::int32_t>{1, 1, 1}, kCam, 32, 32);
  CHECK(r.degenerate_faces == 1);
  CHECK(r.foreground() == 0);
}

TEST_CASE("vertices behind the camera are rejected") {
  const std::vector<double> verts{0, 0, 1, 1, 0, 1, 0, 1, -1};
  CHECK_THROWS_AS(rasterize(verts, std::vector<std::int32_t>{0, 1, 2}, std::vector<std::int32_t>{1, 1, 1}, kCam, 8, 8),
                  GeometryError);
}

TEST_CASE("triangle label is the majority vertex label") {
  std::vector<double> verts;
  for (auto [u, v] : {std::pair{2.0, 2.0}, {30.0, 4.0}, {8.0, 30.0}}) {
    const auto p = unproject(u, v, 2.0);
    verts.insert(verts.end(), p.begin(), p.end());
  }
  const std::vector<std::int32_t> faces{0, 1, 2};
  auto label_of = [&](std::vector<std::int32_t> l) {
    const auto r = rasterize(verts, faces, l, kCam, 32, 32);
    return r.parts[10 * 32 + 10];
  };
  CHECK(label_of({4, 9, 9}) == 9);
  CHECK(label_of({9, 4, 9}) == 9);
  CHECK(label_of({9, 9, 4}) == 9);
  CHECK(label_of({3, 4, 5}) == 3);
}

TEST_CASE("MiniBody render agrees with the supersampled coverage oracle") {
  const auto body = build_template();
  const PerspectiveCamera cam{.focal = 70, .cx0 = 28, .cy0 = 28, .width = 56, .height = 56};
  std::vector<double> verts = body.vertices_rest;
  for (std::size_t v = 0; v < verts.size(); v += 3) verts[v + 2] += 3.0;
  const auto r = rasterize(verts, body.faces, body.part_labels, cam, 56, 56);
  const double oracle = oracle::supersampled_coverage(verts, body.faces, cam, 56, 56, 4);
  CHECK(r.foreground() > 200);
  CHECK(std::fabs(r.foreground() - oracle) <= 0.02 * oracle);
  for (std::size_t i = 0; i < r.depth.size(); ++i) {
    CHECK((r.depth[i] > 0.0) == (r.parts[i] > 0));
    CHECK(r.parts[i] <= 22);
  }
  // A coarser grid is the same as rendering with intrinsics scaled to it.
  const auto quarter = rasterize(verts, body.faces, body.part_labels, cam, 14, 14);
  const PerspectiveCamera scaled{.focal = 17.5, .cx0 = 7, .cy0 = 7, .width = 14, .height = 14};
  const auto direct = rasterize(verts, body.faces, body.part_labels, scaled, 14, 14);
  CHECK(quarter.parts == direct.parts);
  CHECK(quarter.foreground() > 0);
}

TEST_CASE("depth normalization") {
  SUBCASE("endpoints") {
    const auto n = normalize_depth(std::vector<double>{0, 2, 3, 0, 4});
    CHECK(n.depth[0] == 0.0);
    CHECK(n.depth[1] == 0.1);
    CHECK(n.depth[2] == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(n.depth[4] == 1.0);
    CHECK_FALSE(n.all_background);
  }
  SUBCASE("constant foreground") {
    const auto n = normalize_depth(std::vector<double>{0, 5, 5, 5});
    CHECK(n.depth == std::vector<double>{0, 0.55, 0.55, 0.55});
  }
  SUBCASE("all background") {
    const auto n = normalize_depth(std::vector<double>{0, 0, 0});
    CHECK(n.all_background);
    CHECK(n.depth == std::vector<double>{0, 0, 0});
  }
  SUBCASE("affine and invertible on random maps") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1.5, 6.0);
    std::bernoulli_distribution bg(0.3);
    std::vector<double> raw(400);
    for (double& v : raw) v = bg(rng) ? 0.0 : u(rng);
    const auto n = normalize_depth(raw);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK((raw[i] == 0.0) == (n.depth[i] == 0.0));
      if (raw[i] == 0.0) continue;
      CHECK(n.depth[i] >= 0.1);
      CHECK(n.depth[i] <= 1.0);
      a.push_back(raw[i]);
      b.push_back(n.depth[i]);
    }
    auto mean = [](const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); };
    const double ma = mean(a), mb = mean(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    CHECK(sab / std::sqrt(saa * sbb) == doctest::Approx(1.0).epsilon(1e-12));
    // invert: raw = lo + (d - 0.1) / 0.9 * (hi - lo)
    const double lo = *std::min_element(a.begin(), a.end()), hi = *std::max_element(a.begin(), a.end());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(lo + (b[i] - 0.1) / 0.9 * (hi - lo) - a[i]) < 1e-12);
  }
}

TEST_CASE("image dumps have valid headers") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::vector<double> depth{0.0, 0.1, 0.5, 1.0, 0.7, 0.0};
  write_pgm16(dir / "dpose_test_depth.pgm", 2, 3, depth);
  const auto h = read_pnm_header(dir / "dpose_test_depth.pgm");
  CHECK(h.magic == "P5");
  CHECK(h.width == 3);
  CHECK(h.height == 2);
  CHECK(h.maxval == 65535);

  const std::vector<std::int32_t> parts{0, 1, 22, 5, 5, 0};
  write_ppm(dir / "dpose_test_parts.ppm", hstack({labels_to_rgb(2, 3, parts), grey_to_rgb(2, 3, depth)}));
  const auto p = read_pnm_header(dir / "dpose_test_parts.ppm");
  CHECK(p.magic == "P6");
  CHECK(p.width == 7);
  CHECK(p.maxval == 255);

  write_file_bytes(dir / "dpose_test_bad.ppm", std::vector<std::uint8_t>{'P', '6', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 0});
  CHECK_THROWS_AS(read_pnm_header(dir / "dpose_test_bad.ppm"), FormatError);
  CHECK_THROWS_AS(labels_to_rgb(1, 1, std::vector<std::int32_t>{23}), ShapeError);
  for (const char* f : {"dpose_test_depth.pgm", "dpose_test_parts.ppm", "dpose_test_bad.ppm"}) std::filesystem::remove(dir / f);
}
