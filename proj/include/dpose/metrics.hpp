// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpose/geometry.hpp"

namespace dpose {

/// Point clouds are flat K*3 arrays in metres; results are in millimetres.

/// Mean joint distance after moving each cloud's pelvis joint to the origin.
double mpjpe(std::span<const double> pred, std::span<const double> gt, int pelvis_index = 0);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = identity3();
  Vec3 translation{0, 0, 0};

  Vec3 apply(const Vec3& p) const;
};

/// Least-squares similarity mapping pred onto gt. Reflections are excluded.
/// Throws GeometryError when fewer than 3 points are given or the centred
/// cloud has rank below 2.
Similarity umeyama(std::span<const double> pred, std::span<const double> gt, bool with_scale = true);

/// Sum of squared residuals of `t` applied to pred against gt.
double alignment_residual(const Similarity& t, std::span<const double> pred, std::span<const double> gt);

double pa_mpjpe(std::span<const double> pred, std::span<const double> gt);

/// Mean vertex distance after subtracting each mesh's pelvis joint.
double mve(std::span<const double> pred_verts, std::span<const double> gt_verts, std::span<const double> pred_joints,
           std::span<const double> gt_joints, int pelvis_index = 0);

struct EvalReport {
  std::vector<double> mve, mpjpe, pa_mpjpe;  // per sample, mm

  void add(double mve_mm, double mpjpe_mm, double pa_mm);
  std::size_t count() const { return mpjpe.size(); }
  double mean_mve() const;
  double mean_mpjpe() const;
  double mean_pa_mpjpe() const;

  std::string to_json() const;
  /// Columns in the order MVE, MPJPE, PA-MPJPE.
  std::string table() const;
};

}  // namespace dpose
