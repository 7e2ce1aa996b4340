// SPDX-License-Identifier: Apache-2.0
#include "dpose/body.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dpose/error.hpp"
#include "dpose/ops.hpp"

namespace dpose {

using detail::grad_target;
using detail::make_result;
using Index = std::int64_t;

const std::array<int, kNumJoints> kJointParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7,
                                                   8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

const std::array<const char*, kNumJoints> kJointNames = {
    "pelvis",     "left_hip",       "right_hip",      "spine1",     "left_knee",   "right_knee",
    "spine2",     "left_ankle",     "right_ankle",    "spine3",     "left_foot",   "right_foot",
    "neck",       "left_collar",    "right_collar",   "head",       "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",    "left_wrist",     "right_wrist"};

namespace {

std::size_t sz(Index n) { return static_cast<std::size_t>(n); }

// Rest skeleton in a y-up frame, feet pointing to +z. Converted to the
// camera frame (y down, facing -z) by a half turn about x.
constexpr std::array<Vec3, kNumJoints> kRestYUp = {{
    {0.00, 0.00, 0.00},   {0.07, -0.09, 0.00},  {-0.07, -0.09, 0.00}, {0.00, 0.11, 0.00},
    {0.10, -0.47, 0.00},  {-0.10, -0.47, 0.00}, {0.00, 0.24, 0.00},   {0.09, -0.87, 0.00},
    {-0.09, -0.87, 0.00}, {0.00, 0.30, 0.00},   {0.11, -0.93, 0.12},  {-0.11, -0.93, 0.12},
    {0.00, 0.52, 0.00},   {0.08, 0.42, 0.00},   {-0.08, 0.42, 0.00},  {0.00, 0.64, 0.03},
    {0.18, 0.45, 0.00},   {-0.18, 0.45, 0.00},  {0.44, 0.45, 0.00},   {-0.44, 0.45, 0.00},
    {0.68, 0.45, 0.00},   {-0.68, 0.45, 0.00},
}};

// Child whose bone continues this one; -1 for leaves.
constexpr std::array<int, kNumJoints> kPrimaryChild = {3,  4,  5,  6,  7,  8,  9,  10, 11, 12, -1,
                                                       -1, 15, 16, 17, -1, 18, 19, 20, 21, -1, -1};

// Leaf bones end at joint + extension (y-up frame).
Vec3 leaf_extension(int k) {
  switch (k) {
    case 10:
    case 11: return {0.0, -0.01, 0.09};
    case 15: return {0.0, 0.17, 0.0};
    case 20: return {0.10, 0.0, 0.0};
    case 21: return {-0.10, 0.0, 0.0};
    default: return {0.0, 0.0, 0.0};
  }
}

constexpr std::array<double, kNumJoints> kRadius = {0.11, 0.08, 0.08, 0.11, 0.055, 0.055, 0.115, 0.045,
                                                    0.045, 0.12, 0.035, 0.035, 0.05, 0.05, 0.05, 0.095,
                                                    0.05, 0.05, 0.04, 0.04, 0.035, 0.035};

Vec3 to_camera(const Vec3& p) { return {p[0], -p[1], -p[2]}; }

struct Bone {
  Vec3 start, end;
  double r0, r1;
};

double segment_param(const Bone& b, const Vec3& p) {
  const Vec3 d = b.end - b.start;
  const double len2 = dot(d, d);
  return std::clamp(dot(p - b.start, d) / len2, 0.0, 1.0);
}

// Distance from p to the capsule surface of the bone (0 when inside).
double surface_distance(const Bone& b, const Vec3& p) {
  const double t = segment_param(b, p);
  const Vec3 c = b.start + t * (b.end - b.start);
  const double r = b.r0 + t * (b.r1 - b.r0);
  return std::max(0.0, norm(p - c) - r);
}

void orthonormalize_columns(std::vector<double>& dirs, Index rows, int cols, int first) {
  // dirs is rows x cols (row-major); columns [first, cols) are made orthogonal
  // to every earlier column and normalized.
  auto col_dot = [&](int a, int b) {
    double s = 0.0;
    for (Index r = 0; r < rows; ++r) s += dirs[sz(r * cols + a)] * dirs[sz(r * cols + b)];
    return s;
  };
  for (int c = first; c < cols; ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int p = 0; p < c; ++p) {
        const double proj = col_dot(c, p) / col_dot(p, p);
        for (Index r = 0; r < rows; ++r) dirs[sz(r * cols + c)] -= proj * dirs[sz(r * cols + p)];
      }
    }
    const double n = std::sqrt(col_dot(c, c));
    if (n < 1e-12) throw GeometryError("build_template: degenerate shape basis");
    for (Index r = 0; r < rows; ++r) dirs[sz(r * cols + c)] /= n;
  }
}

}  // namespace

Vec3 BodyTemplate::vertex(Index v) const {
  return {vertices_rest[sz(v * 3)], vertices_rest[sz(v * 3 + 1)], vertices_rest[sz(v * 3 + 2)]};
}

Vec3 BodyTemplate::joint(int k) const {
  return {joints_rest[sz(k * 3)], joints_rest[sz(k * 3 + 1)], joints_rest[sz(k * 3 + 2)]};
}

BodyTemplate build_template(const BodyConfig& config) {
  if (config.joints != kNumJoints) {
    throw ConfigError("body: only the " + std::to_string(kNumJoints) + "-joint tree is available, got joints=" +
                      std::to_string(config.joints));
  }
  if (config.shape_dims < 1) throw ConfigError("body: shape_dims must be >= 1");
  if (config.verts_per_bone < 8 || config.verts_per_bone % 4 != 0) {
    throw ConfigError("body: verts_per_bone must be >= 8 and a multiple of 4, got " +
                      std::to_string(config.verts_per_bone));
  }
  const int K = kNumJoints;
  const int S = config.shape_dims;
  BodyTemplate t;
  t.num_joints = K;
  t.num_shape = S;
  t.ring_size = (config.verts_per_bone % 8 == 0 && config.verts_per_bone >= 16) ? 8 : 4;
  t.rings_per_bone = config.verts_per_bone / t.ring_size;
  t.num_verts = K * config.verts_per_bone;
  const int R = t.rings_per_bone, Q = t.ring_size;
  const Index N = t.num_verts;

  t.parents.assign(kJointParents.begin(), kJointParents.end());
  std::vector<Vec3> joints(K);
  for (int k = 0; k < K; ++k) joints[sz(k)] = to_camera(kRestYUp[sz(k)]);
  for (const auto& j : joints) t.joints_rest.insert(t.joints_rest.end(), j.begin(), j.end());

  std::vector<Bone> bones(K);
  for (int k = 0; k < K; ++k) {
    const int c = kPrimaryChild[sz(k)];
    Bone& b = bones[sz(k)];
    b.start = joints[sz(k)];
    b.r0 = kRadius[sz(k)];
    if (c >= 0) {
      b.end = joints[sz(c)];
      b.r1 = kRadius[sz(c)];
    } else {
      b.end = b.start + to_camera(leaf_extension(k));
      b.r1 = 0.8 * b.r0;
    }
  }

  // Rings: vertex index = (k * R + ring) * Q + i.
  std::vector<double> ring_t(sz(N));
  std::vector<Vec3> radial(sz(N));
  t.vertices_rest.resize(sz(N * 3));
  for (int k = 0; k < K; ++k) {
    const Bone& b = bones[sz(k)];
    const Vec3 axis = b.end - b.start;
    const Vec3 d = (1.0 / norm(axis)) * axis;
    const Vec3 ref = std::fabs(d[2]) > 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 0.0, 1.0};
    Vec3 e1 = ref - dot(ref, d) * d;
    e1 = (1.0 / norm(e1)) * e1;
    const Vec3 e2 = cross(d, e1);
    for (int ring = 0; ring < R; ++ring) {
      const double tt = static_cast<double>(ring) / R;
      const Vec3 c = b.start + tt * axis;
      const double r = b.r0 + tt * (b.r1 - b.r0);
      for (int i = 0; i < Q; ++i) {
        const double a = 2.0 * std::numbers::pi * i / Q;
        const Vec3 u = std::cos(a) * e1 + std::sin(a) * e2;
        const Vec3 p = c + r * u;
        const Index v = (static_cast<Index>(k) * R + ring) * Q + i;
        std::copy(p.begin(), p.end(), t.vertices_rest.begin() + v * 3);
        ring_t[sz(v)] = tt;
        radial[sz(v)] = u;
      }
    }
  }

  // Faces: tubes along each bone, bridges into the primary child, flat caps
  // on open ends.
  auto ring_base = [&](int k, int ring) { return static_cast<std::int32_t>((k * R + ring) * Q); };
  auto bridge = [&](std::int32_t a, std::int32_t b) {
    for (int i = 0; i < Q; ++i) {
      const int j = (i + 1) % Q;
      t.faces.insert(t.faces.end(), {a + i, b + i, b + j});
      t.faces.insert(t.faces.end(), {a + i, b + j, a + j});
    }
  };
  auto cap = [&](std::int32_t base) {
    for (int i = 1; i + 1 < Q; ++i) t.faces.insert(t.faces.end(), {base, base + i, base + i + 1});
  };
  std::vector<bool> continues(K, false);
  for (int k = 0; k < K; ++k)
    if (kPrimaryChild[sz(k)] >= 0) continues[sz(kPrimaryChild[sz(k)])] = true;
  for (int k = 0; k < K; ++k) {
    for (int ring = 0; ring + 1 < R; ++ring) bridge(ring_base(k, ring), ring_base(k, ring + 1));
    const int c = kPrimaryChild[sz(k)];
    if (c >= 0) {
      bridge(ring_base(k, R - 1), ring_base(c, 0));
    } else {
      cap(ring_base(k, R - 1));
    }
    if (!continues[sz(k)]) cap(ring_base(k, 0));
  }

  // Skinning: inverse squared surface distance to each bone, top 4.
  t.skin_weights.assign(sz(N * K), 0.0);
  t.part_labels.resize(sz(N));
  for (Index v = 0; v < N; ++v) {
    const Vec3 p = t.vertex(v);
    std::vector<std::pair<double, int>> w(K);
    for (int k = 0; k < K; ++k) {
      const double d = surface_distance(bones[sz(k)], p) + 0.02;
      w[sz(k)] = {1.0 / (d * d), k};
    }
    std::partial_sort(w.begin(), w.begin() + 4, w.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    double total = 0.0;
    for (int i = 0; i < 4; ++i) total += w[sz(i)].first;
    for (int i = 0; i < 4; ++i) t.skin_weights[sz(v * K + w[sz(i)].second)] = w[sz(i)].first / total;
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (t.skin_weights[sz(v * K + k)] > t.skin_weights[sz(v * K + best)]) best = k;
    t.part_labels[sz(v)] = best + 1;
  }

  // Joint regressor: uniform average of the ring whose centroid is nearest.
  t.joint_regressor.assign(sz(K * N), 0.0);
  for (int k = 0; k < K; ++k) {
    double best_d = 1e300;
    Index best_ring = 0;
    for (Index ring = 0; ring < static_cast<Index>(K) * R; ++ring) {
      Vec3 c{0, 0, 0};
      for (int i = 0; i < Q; ++i) c = c + t.vertex(ring * Q + i);
      c = (1.0 / Q) * c;
      const double d = norm(c - joints[sz(k)]);
      if (d < best_d) {
        best_d = d;
        best_ring = ring;
      }
    }
    for (int i = 0; i < Q; ++i) t.joint_regressor[sz(k * N + best_ring * Q + i)] = 1.0 / Q;
  }

  // Shape basis. Component 0 scales the body about the pelvis. The others
  // move joints (vertices follow their bone's endpoints) and swell or thin
  // each bone, then get orthonormalized and scaled to a 1 cm RMS offset.
  t.shape_dirs.assign(sz(N * 3 * S), 0.0);
  for (Index v = 0; v < N; ++v)
    for (int a = 0; a < 3; ++a)
      t.shape_dirs[sz((v * 3 + a) * S)] = 0.05 * (t.vertices_rest[sz(v * 3 + a)] - joints[0][sz(a)]);
  if (S > 1) {
    std::mt19937_64 rng(config.seed ^ 0x5eedb0d1ULL);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int c = 1; c < S; ++c) {
      std::vector<Vec3> joint_shift(K);
      std::vector<double> swell(K);
      for (int k = 0; k < K; ++k) {
        joint_shift[sz(k)] = {0.02 * nd(rng), 0.02 * nd(rng), 0.02 * nd(rng)};
        swell[sz(k)] = 0.01 * nd(rng);
      }
      for (int k = 0; k < K; ++k) {
        const int child = kPrimaryChild[sz(k)];
        const Vec3 end_shift = child >= 0 ? joint_shift[sz(child)] : joint_shift[sz(k)];
        for (Index v = static_cast<Index>(k) * R * Q; v < static_cast<Index>(k + 1) * R * Q; ++v) {
          const double tt = ring_t[sz(v)];
          const Vec3 d = (1.0 - tt) * joint_shift[sz(k)] + tt * end_shift + swell[sz(k)] * radial[sz(v)];
          for (int a = 0; a < 3; ++a) t.shape_dirs[sz((v * 3 + a) * S + c)] = d[sz(a)];
        }
      }
    }
    orthonormalize_columns(t.shape_dirs, N * 3, S, 1);
    const double target = 0.01 * std::sqrt(static_cast<double>(N));
    for (Index r = 0; r < N * 3; ++r)
      for (int c = 1; c < S; ++c) t.shape_dirs[sz(r * S + c)] *= target;
  }

  validate_template(t);
  return t;
}

void validate_template(const BodyTemplate& t) {
  const int K = t.num_joints;
  const Index N = t.num_verts;
  auto fail = [](const std::string& what) { throw GeometryError("body template: " + what); };
  if (static_cast<Index>(t.vertices_rest.size()) != N * 3) fail("vertices_rest size");
  if (static_cast<Index>(t.skin_weights.size()) != N * K) fail("skin_weights size");
  if (static_cast<Index>(t.joint_regressor.size()) != N * K) fail("joint_regressor size");
  if (static_cast<Index>(t.shape_dirs.size()) != N * 3 * t.num_shape) fail("shape_dirs size");
  if (static_cast<int>(t.parents.size()) != K || t.parents[0] != -1) fail("joint tree root");
  for (int k = 1; k < K; ++k)
    if (t.parents[sz(k)] < 0 || t.parents[sz(k)] >= k) fail("joint " + std::to_string(k) + " parent must precede it");
  for (Index v = 0; v < N; ++v) {
    double s = 0.0;
    int nonzero = 0, best = 0;
    for (int k = 0; k < K; ++k) {
      const double w = t.skin_weights[sz(v * K + k)];
      if (w < 0.0) fail("negative skin weight at vertex " + std::to_string(v));
      if (w > 0.0) ++nonzero;
      if (w > t.skin_weights[sz(v * K + best)]) best = k;
      s += w;
    }
    if (std::fabs(s - 1.0) > 1e-12) fail("skin weights of vertex " + std::to_string(v) + " sum to " + std::to_string(s));
    if (nonzero > 4) fail("vertex " + std::to_string(v) + " has more than 4 influences");
    if (t.part_labels[sz(v)] != best + 1) fail("part label of vertex " + std::to_string(v));
  }
  for (int k = 0; k < K; ++k) {
    double s = 0.0;
    for (Index v = 0; v < N; ++v) {
      if (t.joint_regressor[sz(k * N + v)] < 0.0) fail("negative regressor weight");
      s += t.joint_regressor[sz(k * N + v)];
    }
    if (std::fabs(s - 1.0) > 1e-12) fail("regressor row " + std::to_string(k) + " sums to " + std::to_string(s));
  }
  for (std::int32_t f : t.faces)
    if (f < 0 || f >= N) fail("face index out of range");
}

Container template_to_container(const BodyTemplate& t) {
  const Index N = t.num_verts, K = t.num_joints;
  Container c;
  const std::vector<std::int32_t> layout{t.ring_size, t.rings_per_bone};
  c.add(Record::i32("body.layout", {2}, layout));
  c.add(Record::f64("body.vertices_rest", {N, 3}, t.vertices_rest));
  c.add(Record::i32("body.faces", {t.num_faces(), 3}, t.faces));
  c.add(Record::f64("body.skin_weights", {N, K}, t.skin_weights));
  std::vector<std::int32_t> parents(t.parents.begin(), t.parents.end());
  c.add(Record::i32("body.parents", {K}, parents));
  c.add(Record::f64("body.joints_rest", {K, 3}, t.joints_rest));
  c.add(Record::f64("body.shape_dirs", {N, 3, t.num_shape}, t.shape_dirs));
  c.add(Record::f64("body.joint_regressor", {K, N}, t.joint_regressor));
  c.add(Record::i32("body.part_labels", {N}, t.part_labels));
  return c;
}

BodyTemplate template_from_container(const Container& c) {
  BodyTemplate t;
  const auto layout = c.get("body.layout").as_i32();
  if (layout.size() != 2) throw FormatError("body.layout: expected 2 values");
  t.ring_size = layout[0];
  t.rings_per_bone = layout[1];
  const Record& verts = c.get("body.vertices_rest");
  const Record& dirs = c.get("body.shape_dirs");
  if (verts.shape.size() != 2 || dirs.shape.size() != 3) throw FormatError("body: malformed template records");
  t.num_verts = static_cast<int>(verts.shape[0]);
  t.num_shape = static_cast<int>(dirs.shape[2]);
  t.vertices_rest = verts.as_f64();
  t.faces = c.get("body.faces").as_i32();
  t.skin_weights = c.get("body.skin_weights").as_f64();
  const auto parents = c.get("body.parents").as_i32();
  t.parents.assign(parents.begin(), parents.end());
  t.num_joints = static_cast<int>(t.parents.size());
  t.joints_rest = c.get("body.joints_rest").as_f64();
  t.shape_dirs = dirs.as_f64();
  t.joint_regressor = c.get("body.joint_regressor").as_f64();
  t.part_labels = c.get("body.part_labels").as_i32();
  try {
    validate_template(t);
  } catch (const GeometryError& e) {
    throw FormatError(e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Skinning

namespace {

struct Influence {
  std::int32_t joint;
  double weight;
};

// Nonzero skin weights per vertex, 4 slots (zero-padded).
std::vector<Influence> sparse_weights(const BodyTemplate& t) {
  const int K = t.num_joints;
  std::vector<Influence> out(sz(static_cast<Index>(t.num_verts) * 4), Influence{0, 0.0});
  for (Index v = 0; v < t.num_verts; ++v) {
    int slot = 0;
    for (int k = 0; k < K && slot < 4; ++k) {
      const double w = t.skin_weights[sz(v * K + k)];
      if (w != 0.0) out[sz(v * 4 + slot++)] = {k, w};
    }
  }
  return out;
}

Mat3 load3x3(const double* p) { return {p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]}; }
Vec3 load3(const double* p) { return {p[0], p[1], p[2]}; }

void add_outer(double* m, const Vec3& a, const Vec3& b, double s) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i * 3 + j] += s * a[sz(i)] * b[sz(j)];
}

}  // namespace

// Skinning transform of joint k maps rest space to posed space:
//   A_k(x) = Ra_k x + ta_k,  Ra_k = Ra_p R_k,  ta_k = Ra_p (J_k - R_k J_k) + ta_p,
// i.e. the parent's transform composed with a rotation about J_k. Vertices
// are written as x + sum_k w_k ((Ra_k - I) x + ta_k) so the identity pose
// returns the input bit for bit.
Tensor linear_blend_skinning(const BodyTemplate& body, const Tensor& rotations, const Tensor& joints_shaped,
                             const Tensor& verts_shaped, const Tensor& translation) {
  const Index K = body.num_joints, N = body.num_verts;
  const Index B = rotations.ndim() == 4 ? rotations.dim(0) : -1;
  if (rotations.shape() != Shape{B, K, 3, 3}) {
    throw ShapeError("linear_blend_skinning: rotations must be [B," + std::to_string(K) + ",3,3], got " +
                     shape_str(rotations.shape()));
  }
  if (joints_shaped.shape() != Shape{B, K, 3}) throw ShapeError("linear_blend_skinning: joints must be [B,K,3]");
  if (verts_shaped.shape() != Shape{B, N, 3}) throw ShapeError("linear_blend_skinning: vertices must be [B,N,3]");
  if (translation.shape() != Shape{B, 3}) throw ShapeError("linear_blend_skinning: translation must be [B,3]");

  auto influences = std::make_shared<std::vector<Influence>>(sparse_weights(body));
  auto parents = std::make_shared<std::vector<int>>(body.parents);
  auto ra = std::make_shared<std::vector<Mat3>>(sz(B * K));
  std::vector<Vec3> ta(sz(K));
  std::vector<double> out(sz(B * N * 3));
  const auto R = rotations.data();
  const auto J = joints_shaped.data();
  const auto V = verts_shaped.data();
  const auto T = translation.data();

  for (Index b = 0; b < B; ++b) {
    Mat3* rab = ra->data() + b * K;
    for (Index k = 0; k < K; ++k) {
      const Mat3 rk = load3x3(R.data() + (b * K + k) * 9);
      const Vec3 jk = load3(J.data() + (b * K + k) * 3);
      const Vec3 c = jk - mul(rk, jk);
      const int p = (*parents)[sz(k)];
      if (p < 0) {
        rab[k] = rk;
        ta[sz(k)] = c;
      } else {
        rab[k] = mul(rab[p], rk);
        ta[sz(k)] = mul(rab[p], c) + ta[sz(p)];
      }
    }
    std::vector<Mat3> delta(sz(K));
    for (Index k = 0; k < K; ++k) {
      delta[sz(k)] = rab[k];
      for (int i = 0; i < 3; ++i) delta[sz(k)][sz(i * 4)] -= 1.0;
    }
    const Vec3 tr = load3(T.data() + b * 3);
    for (Index v = 0; v < N; ++v) {
      const Vec3 x = load3(V.data() + (b * N + v) * 3);
      Vec3 offset{0, 0, 0};
      for (int s = 0; s < 4; ++s) {
        const Influence& in = (*influences)[sz(v * 4 + s)];
        if (in.weight == 0.0) continue;
        offset = offset + in.weight * (mul(delta[sz(in.joint)], x) + ta[sz(in.joint)]);
      }
      const Vec3 y = x + offset + tr;
      std::copy(y.begin(), y.end(), out.begin() + (b * N + v) * 3);
    }
  }

  return make_result(
      "linear_blend_skinning", {B, N, 3}, std::move(out), {rotations, joints_shaped, verts_shaped, translation},
      [=](std::span<const double> g) {
        double* gR = grad_target(rotations);
        double* gJ = grad_target(joints_shaped);
        double* gV = grad_target(verts_shaped);
        double* gT = grad_target(translation);
        const auto Rd = rotations.data();
        const auto Jd = joints_shaped.data();
        const auto Vd = verts_shaped.data();
        for (Index b = 0; b < B; ++b) {
          const Mat3* rab = ra->data() + b * K;
          std::vector<double> dRa(sz(K * 9), 0.0), dta(sz(K * 3), 0.0);
          for (Index v = 0; v < N; ++v) {
            const Vec3 gv = load3(g.data() + (b * N + v) * 3);
            const Vec3 x = load3(Vd.data() + (b * N + v) * 3);
            Vec3 gx = gv;
            for (int s = 0; s < 4; ++s) {
              const Influence& in = (*influences)[sz(v * 4 + s)];
              if (in.weight == 0.0) continue;
              add_outer(dRa.data() + in.joint * 9, gv, x, in.weight);
              for (int a = 0; a < 3; ++a) dta[sz(in.joint * 3 + a)] += in.weight * gv[sz(a)];
              if (gV) gx = gx + in.weight * (mul(transpose(rab[in.joint]), gv) - gv);
            }
            if (gV)
              for (int a = 0; a < 3; ++a) gV[(b * N + v) * 3 + a] += gx[sz(a)];
            if (gT)
              for (int a = 0; a < 3; ++a) gT[b * 3 + a] += gv[sz(a)];
          }
          // Leaves first; a joint's totals are complete once its children are done.
          for (Index k = K - 1; k >= 0; --k) {
            const int p = (*parents)[sz(k)];
            const Mat3 rk = load3x3(Rd.data() + (b * K + k) * 9);
            const Vec3 jk = load3(Jd.data() + (b * K + k) * 3);
            const Mat3 dak = load3x3(dRa.data() + k * 9);
            const Vec3 dtk = load3(dta.data() + k * 3);
            Mat3 dr;
            Vec3 dc;
            if (p < 0) {
              dr = dak;
              dc = dtk;
            } else {
              const Mat3 rpt = transpose(rab[p]);
              dr = mul(rpt, dak);
              dc = mul(rpt, dtk);
              const Mat3 up = mul(dak, transpose(rk));
              for (int i = 0; i < 9; ++i) dRa[sz(p * 9 + i)] += up[sz(i)];
              add_outer(dRa.data() + p * 9, dtk, jk - mul(rk, jk), 1.0);
              for (int a = 0; a < 3; ++a) dta[sz(p * 3 + a)] += dtk[sz(a)];
            }
            // c = J - R J
            add_outer(dr.data(), dc, jk, -1.0);
            const Vec3 dj = dc - mul(transpose(rk), dc);
            if (gR)
              for (int i = 0; i < 9; ++i) gR[(b * K + k) * 9 + i] += dr[sz(i)];
            if (gJ)
              for (int a = 0; a < 3; ++a) gJ[(b * K + k) * 3 + a] += dj[sz(a)];
          }
        }
      });
}

BodyOutput body_forward(const BodyTemplate& body, const Tensor& rotations, const Tensor& betas,
                        const Tensor& translation, const BodyForwardOptions& options) {
  const Index K = body.num_joints, N = body.num_verts, S = body.num_shape;
  if (rotations.ndim() != 4 || rotations.dim(1) != K || rotations.dim(2) != 3 || rotations.dim(3) != 3) {
    throw ShapeError("body_forward: rotations must be [B," + std::to_string(K) + ",3,3], got " +
                     shape_str(rotations.shape()));
  }
  const Index B = rotations.dim(0);
  if (betas.shape() != Shape{B, S}) {
    throw ShapeError("body_forward: betas must be [" + std::to_string(B) + "," + std::to_string(S) + "], got " +
                     shape_str(betas.shape()));
  }
  if (options.check_rotations) {
    const auto R = rotations.data();
    for (Index b = 0; b < B; ++b)
      for (Index k = 0; k < K; ++k) {
        const Mat3 r = load3x3(R.data() + (b * K + k) * 9);
        const Mat3 rtr = mul(transpose(r), r);
        const Mat3 id = identity3();
        double err = 0.0;
        for (int i = 0; i < 9; ++i) err = std::max(err, std::fabs(rtr[sz(i)] - id[sz(i)]));
        if (err > options.rotation_tolerance || det(r) <= 0.0) {
          throw GeometryError("body_forward: pose of sample " + std::to_string(b) + ", joint " + std::to_string(k) +
                              " is not a rotation (|RtR-I| = " + std::to_string(err) + ", det = " +
                              std::to_string(det(r)) + ")");
        }
      }
  }
  // shape_dirs is stored [N*3, S]; the blend is betas [B,S] x dirs^T.
  std::vector<double> dirs_t(sz(S * N * 3));
  for (Index r = 0; r < N * 3; ++r)
    for (Index s = 0; s < S; ++s) dirs_t[sz(s * N * 3 + r)] = body.shape_dirs[sz(r * S + s)];
  const Tensor dirs = Tensor::from_vector({S, N * 3}, std::move(dirs_t));
  const Tensor rest = Tensor::from_vector({1, N, 3}, body.vertices_rest);
  const Tensor shaped = add(reshape(matmul(betas, dirs), {B, N, 3}), rest);
  const Tensor joints_shaped = apply_matrix(body.joint_regressor, K, N, shaped);
  BodyOutput out;
  out.vertices = linear_blend_skinning(body, rotations, joints_shaped, shaped, translation);
  out.joints = apply_matrix(body.joint_regressor, K, N, out.vertices);
  return out;
}

// ---------------------------------------------------------------------------
// Rotations

Mat3 axis_angle_to_matrix(const Vec3& a) {
  const double theta = norm(a);
  if (theta < 1e-12) {
    // First-order term keeps the map smooth at the origin.
    return {1.0, -a[2], a[1], a[2], 1.0, -a[0], -a[1], a[0], 1.0};
  }
  const Vec3 k = (1.0 / theta) * a;
  const double c = std::cos(theta), s = std::sin(theta), v = 1.0 - c;
  return {c + k[0] * k[0] * v,        k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s,
          k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v,        k[1] * k[2] * v - k[0] * s,
          k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v};
}

namespace {

constexpr double kRot6dEps = 1e-8;

struct Rot6dFrame {
  Vec3 b1, b2, b3;
  double n1, n2, d;
};

Rot6dFrame rot6d_frame(const double* r, Index index) {
  const Vec3 a1{r[0], r[1], r[2]};
  const Vec3 a2{r[3], r[4], r[5]};
  Rot6dFrame f;
  f.n1 = norm(a1);
  if (f.n1 < kRot6dEps) {
    throw GeometryError("rot6d_to_matrix: first column of entry " + std::to_string(index) + " is near zero");
  }
  f.b1 = (1.0 / f.n1) * a1;
  f.d = dot(f.b1, a2);
  const Vec3 u2 = a2 - f.d * f.b1;
  f.n2 = norm(u2);
  if (f.n2 < kRot6dEps) {
    throw GeometryError("rot6d_to_matrix: columns of entry " + std::to_string(index) + " are parallel");
  }
  f.b2 = (1.0 / f.n2) * u2;
  f.b3 = cross(f.b1, f.b2);
  return f;
}

}  // namespace

Mat3 rot6d_to_matrix(std::span<const double, 6> r) {
  const Rot6dFrame f = rot6d_frame(r.data(), 0);
  return {f.b1[0], f.b2[0], f.b3[0], f.b1[1], f.b2[1], f.b3[1], f.b1[2], f.b2[2], f.b3[2]};
}

std::array<double, 6> matrix_to_rot6d(const Mat3& r) { return {r[0], r[3], r[6], r[1], r[4], r[7]}; }

Tensor rot6d_to_matrix(const Tensor& r) {
  if (r.ndim() < 1 || r.dim(-1) != 6) throw ShapeError("rot6d_to_matrix: last dim must be 6, got " + shape_str(r.shape()));
  const Index count = r.numel() / 6;
  Shape shape(r.shape().begin(), r.shape().end() - 1);
  shape.push_back(3);
  shape.push_back(3);
  auto frames = std::make_shared<std::vector<Rot6dFrame>>(sz(count));
  std::vector<double> out(sz(count * 9));
  const auto rd = r.data();
  for (Index i = 0; i < count; ++i) {
    const Rot6dFrame f = rot6d_frame(rd.data() + i * 6, i);
    (*frames)[sz(i)] = f;
    for (int row = 0; row < 3; ++row) {
      out[sz(i * 9 + row * 3 + 0)] = f.b1[sz(row)];
      out[sz(i * 9 + row * 3 + 1)] = f.b2[sz(row)];
      out[sz(i * 9 + row * 3 + 2)] = f.b3[sz(row)];
    }
  }
  return make_result("rot6d_to_matrix", std::move(shape), std::move(out), {r}, [r, frames, count](std::span<const double> g) {
    double* gr = grad_target(r);
    const auto rd = r.data();
    for (Index i = 0; i < count; ++i) {
      const Rot6dFrame& f = (*frames)[sz(i)];
      const double* gi = g.data() + i * 9;
      Vec3 g1{gi[0], gi[3], gi[6]}, g2{gi[1], gi[4], gi[7]};
      const Vec3 g3{gi[2], gi[5], gi[8]};
      g1 = g1 + cross(f.b2, g3);
      g2 = g2 + cross(g3, f.b1);
      const Vec3 gu2 = (1.0 / f.n2) * (g2 - dot(f.b2, g2) * f.b2);
      const Vec3 a2{rd[sz(i * 6 + 3)], rd[sz(i * 6 + 4)], rd[sz(i * 6 + 5)]};
      Vec3 ga2 = gu2;
      const double gd = -dot(f.b1, gu2);
      g1 = g1 + (-f.d) * gu2 + gd * a2;
      ga2 = ga2 + gd * f.b1;
      const Vec3 ga1 = (1.0 / f.n1) * (g1 - dot(f.b1, g1) * f.b1);
      for (int a = 0; a < 3; ++a) {
        gr[i * 6 + a] += ga1[sz(a)];
        gr[i * 6 + 3 + a] += ga2[sz(a)];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Vertex mapping

Tensor apply_vertex_mapping(std::span<const double> mapping, Index rows, const Tensor& verts) {
  if (verts.ndim() != 3 || verts.dim(2) != 3) {
    throw ShapeError("apply_vertex_mapping: vertices must be [B,N,3], got " + shape_str(verts.shape()));
  }
  const Index n = verts.dim(1);
  if (static_cast<Index>(mapping.size()) != rows * n) {
    throw ShapeError("apply_vertex_mapping: mapping has " + std::to_string(mapping.size()) + " entries, expected " +
                     std::to_string(rows) + " x " + std::to_string(n));
  }
  for (Index i = 0; i < rows; ++i) {
    double s = 0.0;
    for (Index j = 0; j < n; ++j) s += mapping[sz(i * n + j)];
    if (std::fabs(s - 1.0) > 1e-9) {
      throw GeometryError("apply_vertex_mapping: row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
  return apply_matrix(mapping, rows, n, verts);
}

std::vector<double> synthetic_vertex_mapping(const BodyTemplate& body, Index rows, std::uint64_t seed) {
  const Index n = body.num_verts;
  if (rows < 1 || rows > n) throw ConfigError("synthetic_vertex_mapping: rows must be in [1, N]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  std::vector<double> d(sz(rows * n), 0.0);
  const Index q = body.ring_size;
  for (Index i = 0; i < rows; ++i) {
    const Index a = i * n / rows;
    const Index b = (a / q) * q + (a % q + 1) % q;
    const double w = u(rng);
    d[sz(i * n + a)] += w;
    d[sz(i * n + b)] += 1.0 - w;
  }
  return d;
}

}  // namespace dpose
