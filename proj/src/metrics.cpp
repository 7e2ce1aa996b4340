// SPDX-License-Identifier: Apache-2.0
#include "dpose/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dpose/error.hpp"
#include "json.hpp"

namespace dpose {

namespace {

std::size_t points_of(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size() || a.size() % 3 != 0 || a.empty()) {
    throw ShapeError(std::string(op) + ": point sets must be non-empty, of equal size and a multiple of 3 (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  return a.size() / 3;
}

Vec3 point(std::span<const double> a, std::size_t i) { return {a[i * 3], a[i * 3 + 1], a[i * 3 + 2]}; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double mpjpe(std::span<const double> pred, std::span<const double> gt, int pelvis_index) {
  const std::size_t k = points_of(pred, gt, "mpjpe");
  if (pelvis_index < 0 || static_cast<std::size_t>(pelvis_index) >= k) throw ShapeError("mpjpe: pelvis index out of range");
  const Vec3 pp = point(pred, static_cast<std::size_t>(pelvis_index)), gp = point(gt, static_cast<std::size_t>(pelvis_index));
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += norm((point(pred, i) - pp) - (point(gt, i) - gp));
  return 1000.0 * s / static_cast<double>(k);
}

Vec3 Similarity::apply(const Vec3& p) const { return scale * mul(rotation, p) + translation; }

Similarity umeyama(std::span<const double> pred, std::span<const double> gt, bool with_scale) {
  const std::size_t k = points_of(pred, gt, "umeyama");
  if (k < 3) throw GeometryError("umeyama: need at least 3 points, got " + std::to_string(k));
  Eigen::Matrix3Xd X(3, k), Y(3, k);
  for (std::size_t i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) {
      X(c, static_cast<Eigen::Index>(i)) = pred[i * 3 + static_cast<std::size_t>(c)];
      Y(c, static_cast<Eigen::Index>(i)) = gt[i * 3 + static_cast<std::size_t>(c)];
    }
  const Eigen::Vector3d mx = X.rowwise().mean(), my = Y.rowwise().mean();
  X.colwise() -= mx;
  Y.colwise() -= my;
  const double n = static_cast<double>(k);
  const double var_x = X.squaredNorm() / n;

  Eigen::JacobiSVD<Eigen::Matrix3d> svd_x(X * X.transpose() / n);
  const auto sx = svd_x.singularValues();
  if (sx(1) <= 1e-12 * std::max(1.0, sx(0))) {
    throw GeometryError("umeyama: source points are degenerate (collinear or coincident)");
  }

  const Eigen::Matrix3d cov = Y * X.transpose() / n;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d(1, 1, 1);
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) d(2) = -1;
  const Eigen::Matrix3d R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double s = with_scale ? svd.singularValues().dot(d) / var_x : 1.0;
  const Eigen::Vector3d t = my - s * R * mx;

  Similarity out;
  out.scale = s;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.rotation[static_cast<std::size_t>(r * 3 + c)] = R(r, c);
  out.translation = {t(0), t(1), t(2)};
  return out;
}

double alignment_residual(const Similarity& t, std::span<const double> pred, std::span<const double> gt) {
  const std::size_t k = points_of(pred, gt, "alignment_residual");
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const Vec3 r = t.apply(point(pred, i)) - point(gt, i);
    s += dot(r, r);
  }
  return s;
}

double pa_mpjpe(std::span<const double> pred, std::span<const double> gt) {
  const std::size_t k = points_of(pred, gt, "pa_mpjpe");
  const Similarity t = umeyama(pred, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += norm(t.apply(point(pred, i)) - point(gt, i));
  return 1000.0 * s / static_cast<double>(k);
}

double mve(std::span<const double> pred_verts, std::span<const double> gt_verts, std::span<const double> pred_joints,
           std::span<const double> gt_joints, int pelvis_index) {
  const std::size_t n = points_of(pred_verts, gt_verts, "mve");
  const std::size_t k = points_of(pred_joints, gt_joints, "mve");
  if (pelvis_index < 0 || static_cast<std::size_t>(pelvis_index) >= k) throw ShapeError("mve: pelvis index out of range");
  const Vec3 pp = point(pred_joints, static_cast<std::size_t>(pelvis_index));
  const Vec3 gp = point(gt_joints, static_cast<std::size_t>(pelvis_index));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += norm((point(pred_verts, i) - pp) - (point(gt_verts, i) - gp));
  return 1000.0 * s / static_cast<double>(n);
}

void EvalReport::add(double mve_mm, double mpjpe_mm, double pa_mm) {
  mve.push_back(mve_mm);
  mpjpe.push_back(mpjpe_mm);
  pa_mpjpe.push_back(pa_mm);
}

double EvalReport::mean_mve() const { return mean_of(mve); }
double EvalReport::mean_mpjpe() const { return mean_of(mpjpe); }
double EvalReport::mean_pa_mpjpe() const { return mean_of(pa_mpjpe); }

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["count"] = count();
  j["units"] = "mm";
  j["mean"] = {{"mve", mean_mve()}, {"mpjpe", mean_mpjpe()}, {"pa_mpjpe", mean_pa_mpjpe()}};
  j["per_sample"] = {{"mve", mve}, {"mpjpe", mpjpe}, {"pa_mpjpe", pa_mpjpe}};
  return j.dump(2);
}

std::string EvalReport::table() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s\n%-8zu %10.2f %10.2f %10.2f\n", "samples", "MVE", "MPJPE", "PA-MPJPE",
                count(), mean_mve(), mean_mpjpe(), mean_pa_mpjpe());
  return buf;
}

}  // namespace dpose
