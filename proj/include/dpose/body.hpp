// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpose/container.hpp"
#include "dpose/geometry.hpp"
#include "dpose/tensor.hpp"

namespace dpose {

inline constexpr int kNumJoints = 22;
inline constexpr int kNumShape = 11;
inline constexpr int kNumParts = kNumJoints + 1;  // + background

extern const std::array<int, kNumJoints> kJointParents;
extern const std::array<const char*, kNumJoints> kJointNames;

struct BodyConfig {
  int joints = kNumJoints;  // only the 22-joint tree is defined
  int shape_dims = kNumShape;
  int verts_per_bone = 32;  // >= 8, multiple of 4
  std::uint64_t seed = 0;
};

/// Procedural skinned body. Every bone carries rings of vertices along its
/// axis; the first ring of bone k sits exactly on joint k. Coordinates are in
/// camera convention (x right, y down, z forward) with the figure upright and
/// facing -z, so a camera at the origin looking down +z sees it from the front.
struct BodyTemplate {
  int num_joints = 0;
  int num_shape = 0;
  int num_verts = 0;
  int ring_size = 0;
  int rings_per_bone = 0;
  std::vector<double> vertices_rest;    // N x 3
  std::vector<std::int32_t> faces;      // F x 3
  std::vector<double> skin_weights;     // N x K, <= 4 nonzeros per row
  std::vector<int> parents;             // K
  std::vector<double> joints_rest;      // K x 3
  std::vector<double> shape_dirs;       // N x 3 x S
  std::vector<double> joint_regressor;  // K x N
  std::vector<std::int32_t> part_labels;  // N, in [1, K]

  std::int64_t num_faces() const { return static_cast<std::int64_t>(faces.size() / 3); }
  Vec3 vertex(std::int64_t v) const;
  Vec3 joint(int k) const;
};

BodyTemplate build_template(const BodyConfig& config = {});

/// Throws GeometryError describing the first violated template invariant.
void validate_template(const BodyTemplate& body);

Container template_to_container(const BodyTemplate& body);
BodyTemplate template_from_container(const Container& c);

struct BodyOutput {
  Tensor vertices;  // [B, N, 3]
  Tensor joints;    // [B, K, 3]
};

struct BodyForwardOptions {
  // Reject pose matrices that are not rotations (tolerance on R^T R = I).
  bool check_rotations = true;
  double rotation_tolerance = 1e-6;
};

/// Shape blendshapes, forward kinematics along the joint tree, linear blend
/// skinning, translation, then joints = regressor * posed vertices.
/// rotations [B,K,3,3] (joint 0 = global orientation), betas [B,S], translation [B,3].
BodyOutput body_forward(const BodyTemplate& body, const Tensor& rotations, const Tensor& betas,
                        const Tensor& translation, const BodyForwardOptions& options = {});

/// Posed vertices from already-shaped rest vertices [B,N,3] and joints [B,K,3].
/// Exposed for testing the skinning kernel on its own.
Tensor linear_blend_skinning(const BodyTemplate& body, const Tensor& rotations, const Tensor& joints_shaped,
                             const Tensor& verts_shaped, const Tensor& translation);

// Rotations -----------------------------------------------------------------

Mat3 axis_angle_to_matrix(const Vec3& axis_angle);
Mat3 rot6d_to_matrix(std::span<const double, 6> r);
/// Differentiable 6D -> matrix over the last axis: [..., 6] -> [..., 3, 3].
/// The 6 numbers are the first two columns; Gram-Schmidt, third = cross.
Tensor rot6d_to_matrix(const Tensor& r);
/// First two columns of R, the inverse of rot6d_to_matrix on rotations.
std::array<double, 6> matrix_to_rot6d(const Mat3& r);

// Vertex mapping --------------------------------------------------------------

/// out[b] = D * verts[b] for a row-stochastic D (rows x N).
Tensor apply_vertex_mapping(std::span<const double> mapping, std::int64_t rows, const Tensor& verts);

/// A fixed downsampling map: every output vertex is a seeded convex blend of
/// two template vertices on the same ring.
std::vector<double> synthetic_vertex_mapping(const BodyTemplate& body, std::int64_t rows, std::uint64_t seed);

}  // namespace dpose
