// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "dpose/error.hpp"
#include "dpose/gradcheck.hpp"
#include "dpose/loss.hpp"
#include "dpose/ops.hpp"
#include "test_util.hpp"

using namespace dpose;
using dpose::testing::random_tensor;

namespace {

// Depth-like map: background with probability bg, else uniform in [0.1, 1].
Tensor random_depth(Shape shape, std::mt19937_64& rng, double bg) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution is_bg(bg);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = is_bg(rng) ? 0.0 : u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi, bool grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), grad);
}

// Windowed SSIM with two-pass statistics, written directly from the definition.
double ssim_oracle(const Tensor& pred, const Tensor& gt, const std::vector<std::uint8_t>& include) {
  const auto B = gt.dim(0), H = gt.dim(2), W = gt.dim(3);
  double total = 0;
  int windows = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    if (!include[b]) continue;
    auto gx = [&](std::int64_t i, std::int64_t j) { return gt.at({b, 0, i, j}); };
    auto py = [&](std::int64_t i, std::int64_t j) { return gx(i, j) > 0 ? pred.at({b, 0, i, j}) : 0.0; };
    for (std::int64_t ci = 0; ci < H; ++ci)
      for (std::int64_t cj = 0; cj < W; ++cj) {
        if (!(gx(ci, cj) > 0)) continue;
        std::vector<double> xs, ys;
        for (std::int64_t i = ci - 3; i <= ci + 3; ++i)
          for (std::int64_t j = cj - 3; j <= cj + 3; ++j)
            if (i >= 0 && i < H && j >= 0 && j < W) {
              xs.push_back(gx(i, j));
              ys.push_back(py(i, j));
            }
        const double n = xs.size();
        double mx = 0, my = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
          mx += xs[k] / n;
          my += ys[k] / n;
        }
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
          vx += (xs[k] - mx) * (xs[k] - mx) / n;
          vy += (ys[k] - my) * (ys[k] - my) / n;
          cxy += (xs[k] - mx) * (ys[k] - my) / n;
        }
        total += (2 * mx * my + 1e-4) * (2 * cxy + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
        ++windows;
      }
  }
  return windows ? total / windows : 1.0;
}

}  // namespace

TEST_CASE("depth loss") {
  std::mt19937_64 rng(1);
  const Tensor gt = random_depth({2, 1, 12, 10}, rng, 0.4);
  const std::vector<std::uint8_t> both{1, 1};

  SUBCASE("identical maps give exactly zero") {
    CHECK(depth_loss(gt, gt, both, 0.1, 0.02).item() == 0.0);
    CHECK(masked_ssim(gt, gt, both).item() == 1.0);
  }
  SUBCASE("all background gives zero") {
    const Tensor empty = Tensor::zeros({2, 1, 12, 10});
    CHECK(depth_loss(uniform({2, 1, 12, 10}, rng, 0, 1), empty, both, 0.1, 0.02).item() == 0.0);
  }
  SUBCASE("predictions on background are ignored") {
    const Tensor pred = uniform({2, 1, 12, 10}, rng, 0.05, 0.95);
    std::vector<double> other(pred.data().begin(), pred.data().end());
    for (std::size_t i = 0; i < other.size(); ++i)
      if (gt.data()[i] == 0.0) other[i] = 0.5 * other[i] + 0.3;
    CHECK(depth_loss(pred, gt, both, 0.1, 0.02).item() ==
          depth_loss(Tensor::from_vector(pred.shape(), other), gt, both, 0.1, 0.02).item());
  }
  SUBCASE("SSIM matches the window loop") {
    for (int trial = 0; trial < 4; ++trial) {
      const Tensor g = random_depth({2, 1, 9, 11}, rng, 0.3);
      const Tensor p = uniform({2, 1, 9, 11}, rng, 0.0, 1.0);
      const std::vector<std::uint8_t> inc{1, static_cast<std::uint8_t>(trial % 2)};
      CHECK(std::fabs(masked_ssim(p, g, inc).item() - ssim_oracle(p, g, inc)) < 1e-9);
    }
  }
  SUBCASE("L1 term and sample exclusion") {
    const Tensor pred = uniform({2, 1, 12, 10}, rng, 0.0, 1.0);
    double s = 0;
    int n = 0;
    for (std::int64_t i = 0; i < 120; ++i)
      if (gt.data()[i] > 0) {
        s += std::fabs(gt.data()[i] - pred.data()[i]);
        ++n;
      }
    const std::vector<std::uint8_t> first{1, 0};
    const double expect = 0.1 * s / n + 0.02 * (1 - ssim_oracle(pred, gt, first));
    CHECK(std::fabs(depth_loss(pred, gt, first, 0.1, 0.02).item() - expect) < 1e-12);
    CHECK(depth_loss(pred, gt, std::vector<std::uint8_t>{0, 0}, 0.1, 0.02).item() == 0.0);
  }
  SUBCASE("gradient") {
    const Tensor pred = uniform({2, 1, 8, 9}, rng, 0.05, 0.95, true);
    const Tensor g = random_depth({2, 1, 8, 9}, rng, 0.3);
    const auto rep = finite_diff_check([&] { return depth_loss(pred, g, both, 0.1, 0.02); }, {pred});
    CHECK(rep.pass);
    const auto rep2 = finite_diff_check([&] { return masked_ssim(pred, g, both); }, {pred});
    CHECK(rep2.pass);
  }
}

TEST_CASE("segmentation loss") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> lab(0, 22);
  std::vector<std::int32_t> labels(2 * 3 * 4);
  for (auto& l : labels) l = lab(rng);

  SUBCASE("confident and correct") {
    std::vector<double> logits(2 * 23 * 12, 0.0);
    for (int b = 0; b < 2; ++b)
      for (int p = 0; p < 12; ++p) logits[(b * 23 + labels[b * 12 + p]) * 12 + p] = 1000.0;
    CHECK(segm_loss(Tensor::from_vector({2, 23, 3, 4}, logits), labels, 0.1).item() < 1e-300);
  }
  SUBCASE("uniform logits") {
    CHECK(segm_loss(Tensor::full({2, 23, 3, 4}, 0.7), labels, 0.1).item() == doctest::Approx(0.1 * std::log(23.0)).epsilon(1e-14));
  }
  SUBCASE("hand computed 2x2") {
    const Tensor logits = random_tensor({1, 23, 2, 2}, rng);
    const std::vector<std::int32_t> l{0, 5, 22, 11};
    double expect = 0;
    for (int p = 0; p < 4; ++p) {
      double z = 0;
      for (int c = 0; c < 23; ++c) z += std::exp(logits.data()[c * 4 + p]);
      expect += -std::log(std::exp(logits.data()[l[p] * 4 + p]) / z) / 4;
    }
    CHECK(std::fabs(segm_loss(logits, l, 0.1).item() - 0.1 * expect) < 1e-14);
  }
  SUBCASE("out-of-range label") {
    std::vector<std::int32_t> bad(labels);
    bad[3] = 23;
    CHECK_THROWS_AS(segm_loss(Tensor::zeros({2, 23, 3, 4}), bad, 0.1), ShapeError);
  }
}

TEST_CASE("human losses") {
  std::mt19937_64 rng(3);
  const Tensor R = random_tensor({2, 22, 3, 3}, rng), beta = random_tensor({2, 11}, rng);
  const Tensor J = random_tensor({2, 22, 3}, rng), j2 = uniform({2, 22, 2}, rng, 0, 256), V = random_tensor({2, 30, 3}, rng);
  const std::vector<PerspectiveCamera> cams{{}, {.focal = 300, .cx0 = 160, .cy0 = 100, .width = 320, .height = 200}};

  CHECK(pose_loss(R, R).item() == 0.0);
  CHECK(shape_loss(beta, beta).item() == 0.0);
  CHECK(joints3d_loss(J, J).item() == 0.0);
  CHECK(joints2d_loss(j2, j2, cams).item() == 0.0);
  CHECK(vertices_loss(V, J, V, J).item() == 0.0);
  CHECK(shape_loss(add_scalar(beta, 1.0), beta).item() == doctest::Approx(1.0).epsilon(1e-15));
  // A rigid shift of both meshes and joints is removed by pelvis centring.
  CHECK(joints3d_loss(add_scalar(J, 0.7), J).item() < 1e-28);
  CHECK(vertices_loss(add_scalar(V, 0.7), add_scalar(J, 0.7), V, J).item() < 1e-15);

  const Tensor R2 = random_tensor({2, 22, 3, 3}, rng), J2 = random_tensor({2, 22, 3}, rng);
  const Tensor k2 = uniform({2, 22, 2}, rng, 0, 256), V2 = random_tensor({2, 30, 3}, rng);
  double pose = 0, j3 = 0, jj = 0, v = 0;
  for (int i = 0; i < 2 * 22 * 9; ++i) pose += std::pow(R.data()[i] - R2.data()[i], 2) / (2 * 22 * 9);
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 22; ++k)
      for (int c = 0; c < 3; ++c) {
        const double a = J.at({b, k, c}) - J.at({b, 0, c}), g = J2.at({b, k, c}) - J2.at({b, 0, c});
        j3 += (a - g) * (a - g) / (2 * 22 * 3);
      }
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 22; ++k)
      for (int c = 0; c < 2; ++c) jj += std::pow((j2.at({b, k, c}) - k2.at({b, k, c})) / (b ? 320.0 : 256.0), 2) / 88;
  for (int b = 0; b < 2; ++b)
    for (int n = 0; n < 30; ++n)
      for (int c = 0; c < 3; ++c)
        v += std::fabs((V.at({b, n, c}) - J.at({b, 0, c})) - (V2.at({b, n, c}) - J2.at({b, 0, c}))) / 180;
  CHECK(std::fabs(pose_loss(R, R2).item() - pose) < 1e-12);
  CHECK(std::fabs(joints3d_loss(J, J2).item() - j3) < 1e-12);
  CHECK(std::fabs(joints2d_loss(j2, k2, cams).item() - jj) < 1e-12);
  CHECK(std::fabs(vertices_loss(V, J, V2, J2).item() - v) < 1e-12);

  SUBCASE("gradients") {
    const Tensor r = random_tensor({2, 22, 3, 3}, rng, true), jp = random_tensor({2, 22, 3}, rng, true);
    const Tensor kp = uniform({2, 22, 2}, rng, 0, 256, true), vp = random_tensor({2, 30, 3}, rng, true);
    const auto rep = finite_diff_check(
        [&] {
          return add(add(pose_loss(r, R), joints3d_loss(jp, J)),
                     add(joints2d_loss(kp, j2, cams), vertices_loss(vp, jp, V, J)));
        },
        {r, jp, kp, vp});
    CHECK(rep.pass);
  }
}

TEST_CASE("total loss is the sum of its terms") {
  std::mt19937_64 rng(4);
  const int N = 30;
  PipelineOutput p;
  BatchTargets g;
  p.depth.map = uniform({2, 1, 6, 6}, rng, 0.05, 0.95);
  p.parts.map = random_tensor({2, 23, 6, 6}, rng);
  p.params.rotations = random_tensor({2, 22, 3, 3}, rng);
  p.params.betas = random_tensor({2, 11}, rng);
  p.joints3d = random_tensor({2, 22, 3}, rng);
  p.joints2d = uniform({2, 22, 2}, rng, 0, 256);
  p.vertices = random_tensor({2, N, 3}, rng);
  g.depth = random_depth({2, 1, 6, 6}, rng, 0.3);
  std::uniform_int_distribution<int> lab(0, 22);
  for (int i = 0; i < 72; ++i) g.parts.push_back(lab(rng));
  g.has_depth = {1, 1};
  g.rotations = random_tensor({2, 22, 3, 3}, rng);
  g.betas = random_tensor({2, 11}, rng);
  g.joints3d = random_tensor({2, 22, 3}, rng);
  g.joints2d = uniform({2, 22, 2}, rng, 0, 256);
  g.vertices = random_tensor({2, N, 3}, rng);
  g.cams = {{}, {}};

  const auto b = breakdown(total_loss(p, g));
  CHECK(b.total > 0);
  CHECK(std::fabs(b.total - (b.depth + b.segm + b.pose + b.shape + b.j3d + b.j2d + b.v3d)) < 1e-12);
  for (double v : {b.depth, b.segm, b.pose, b.shape, b.j3d, b.j2d, b.v3d}) CHECK(v > 0);

  SUBCASE("only depth differs") {
    PipelineOutput q = p;
    BatchTargets h = g;
    q.parts.map = Tensor::zeros({2, 23, 6, 6});
    std::vector<double> logits(2 * 23 * 36, 0.0);
    for (int bb = 0; bb < 2; ++bb)
      for (int px = 0; px < 36; ++px) logits[(bb * 23 + g.parts[bb * 36 + px]) * 36 + px] = 2000.0;
    q.parts.map = Tensor::from_vector({2, 23, 6, 6}, logits);
    h.rotations = q.params.rotations;
    h.betas = q.params.betas;
    h.joints3d = q.joints3d;
    h.joints2d = q.joints2d;
    h.vertices = q.vertices;
    const auto c = breakdown(total_loss(q, h));
    CHECK(c.segm == 0.0);
    CHECK(c.pose + c.shape + c.j3d + c.j2d + c.v3d == 0.0);
    CHECK(c.total == c.depth);
    CHECK(c.depth > 0);
  }
  SUBCASE("no depth supervision") {
    BatchTargets h = g;
    h.has_depth = {0, 0};
    CHECK(breakdown(total_loss(p, h)).depth == 0.0);
    PipelineOutput q = p;
    q.depth.map = Tensor();
    CHECK(breakdown(total_loss(q, g)).depth == 0.0);
  }
  CHECK(LossBreakdown::csv_header() == "step,depth,segm,pose,shape,j3d,j2d,v3d,total");
  CHECK(b.csv_row(7).rfind("7,", 0) == 0);
}
