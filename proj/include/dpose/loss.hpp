// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpose/camproj.hpp"
#include "dpose/net.hpp"
#include "dpose/tensor.hpp"

namespace dpose {

struct LossWeights {
  double depth_l1 = 0.1;
  double depth_ssim = 0.02;
  double segm = 0.1;
  double pose = 10.0;
  double shape = 0.01;
  double j3d = 50.0;
  double v3d = 10.0;
  double j2d = 50.0;
};

struct SsimConfig {
  int window = 7;
  double c1 = 1e-4;
  double c2 = 9e-4;
};

/// Mean SSIM between gt[B,1,h,w] and pred masked to gt's foreground (gt > 0),
/// over windows centred on foreground pixels of the samples with include[b] set.
/// Windows are clipped at the image border. Returns a constant 1 when no window
/// qualifies. Differentiable in pred only.
Tensor masked_ssim(const Tensor& pred, const Tensor& gt, std::span<const std::uint8_t> include,
                   const SsimConfig& config = {});

/// lambda1 * masked L1 + lambda2 * (1 - masked SSIM); 0 when nothing is supervised.
/// include[b] = 0 removes sample b (no depth ground truth).
Tensor depth_loss(const Tensor& pred, const Tensor& gt, std::span<const std::uint8_t> include, double lambda_l1,
                  double lambda_ssim, const SsimConfig& config = {});

/// lambda * mean cross-entropy over every pixel, background included.
Tensor segm_loss(const Tensor& logits, std::span<const std::int32_t> labels, double lambda);

/// Unweighted human terms.
Tensor pose_loss(const Tensor& pred_rot, const Tensor& gt_rot);  // MSE over [B,22,3,3]
Tensor shape_loss(const Tensor& pred_betas, const Tensor& gt_betas);
Tensor joints3d_loss(const Tensor& pred, const Tensor& gt);  // MSE, pelvis-centred
/// MSE of full-frame pixel coordinates divided by max(width, height) of each sample's camera.
Tensor joints2d_loss(const Tensor& pred, const Tensor& gt, std::span<const PerspectiveCamera> cams);
/// Mean absolute vertex error after subtracting each mesh's own pelvis joint.
Tensor vertices_loss(const Tensor& pred_verts, const Tensor& pred_joints, const Tensor& gt_verts,
                     const Tensor& gt_joints);

struct BatchTargets {
  Tensor depth;                        // [B,1,h,w], normalised, 0 = background
  std::vector<std::int32_t> parts;     // B*h*w labels in [0,22]
  std::vector<std::uint8_t> has_depth;  // per sample
  Tensor rotations;                    // [B,22,3,3]
  Tensor betas;                        // [B,S]
  Tensor joints3d;                     // [B,22,3], body frame
  Tensor joints2d;                     // [B,22,2], full-frame pixels
  Tensor vertices;                     // [B,N,3], body frame
  std::vector<PerspectiveCamera> cams;
};

/// Weighted terms; total = depth + segm + pose + shape + j3d + j2d + v3d.
struct LossTerms {
  Tensor depth, segm, pose, shape, j3d, j2d, v3d, total;
};

struct LossBreakdown {
  double depth = 0, segm = 0, pose = 0, shape = 0, j3d = 0, j2d = 0, v3d = 0, total = 0;

  static std::string csv_header();  // step,depth,...,total
  std::string csv_row(std::int64_t step) const;
};

LossTerms total_loss(const PipelineOutput& pred, const BatchTargets& gt, const LossWeights& weights = {});
LossBreakdown breakdown(const LossTerms& terms);

}  // namespace dpose
