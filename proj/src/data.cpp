// SPDX-License-Identifier: Apache-2.0
#include "dpose/data.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "dpose/error.hpp"
#include "dpose/parallel.hpp"
#include "dpose/raster.hpp"
#include "json.hpp"

namespace dpose {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Vec3 matrix_to_axis_angle(const Mat3& m) {
  Eigen::Matrix3d e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) e(r, c) = m[static_cast<std::size_t>(r * 3 + c)];
  const Eigen::AngleAxisd aa(e);
  const Eigen::Vector3d v = aa.axis() * aa.angle();
  return {v(0), v(1), v(2)};
}

Mat3 rot_x(double a) { return {1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a)}; }
Mat3 rot_y(double a) { return {std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)}; }
Mat3 rot_z(double a) { return {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1}; }

void check_range(double lo, double hi, const char* what) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ConfigError(std::string("data: invalid range for ") + what);
  }
}

template <class T>
Record vec_record(const std::string& name, Shape shape, const std::vector<T>& v);

template <>
Record vec_record<double>(const std::string& name, Shape shape, const std::vector<double>& v) {
  return Record::f64(name, std::move(shape), v);
}
template <>
Record vec_record<std::int32_t>(const std::string& name, Shape shape, const std::vector<std::int32_t>& v) {
  return Record::i32(name, std::move(shape), v);
}

std::vector<double> f64_of(const Container& c, const std::string& name, std::int64_t expect) {
  const Record& r = c.get(name);
  if (r.numel() != expect) {
    throw FormatError("sample record '" + name + "' has " + std::to_string(r.numel()) + " elements, expected " +
                      std::to_string(expect));
  }
  return r.as_f64();
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void SamplingRanges::validate() const {
  check_range(0.0, max_joint_angle_deg, "max_joint_angle_deg");
  check_range(0.0, root_yaw_deg, "root_yaw_deg");
  check_range(0.0, root_tilt_deg, "root_tilt_deg");
  check_range(0.0, beta_std, "beta_std");
  check_range(0.0, beta_clip, "beta_clip");
  check_range(distance_min, distance_max, "distance");
  if (distance_min <= 0.5) throw ConfigError("data: distance_min must exceed 0.5 m");
  check_range(0.0, lateral, "lateral");
  check_range(0.0, bbox_margin, "bbox_margin");
}

void DataConfig::validate() const {
  if (count < 0) throw ConfigError("data: count must be >= 0");
  if (input_size <= 0 || input_size % 4 != 0) throw ConfigError("data: input_size must be a positive multiple of 4");
  validate_camera(frame);
  ranges.validate();
  check_range(0.0, noise_std, "noise_std");
  if (!(no_depth_fraction >= 0.0 && no_depth_fraction <= 1.0)) throw ConfigError("data: no_depth_fraction must be in [0,1]");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("data: train_fraction must be in [0,1]");
}

std::string DataConfig::canonical() const {
  std::ostringstream o;
  o.precision(17);
  o << "count=" << count << "\nseed=" << seed << "\ninput_size=" << input_size << "\nfocal=" << frame.focal
    << "\ncx0=" << frame.cx0 << "\ncy0=" << frame.cy0 << "\nwidth=" << frame.width << "\nheight=" << frame.height
    << "\njoints=" << body.joints << "\nshape_dims=" << body.shape_dims << "\nverts_per_bone=" << body.verts_per_bone
    << "\nbody_seed=" << body.seed << "\nmax_joint_angle_deg=" << ranges.max_joint_angle_deg
    << "\nroot_yaw_deg=" << ranges.root_yaw_deg << "\nroot_tilt_deg=" << ranges.root_tilt_deg
    << "\nbeta_std=" << ranges.beta_std << "\nbeta_clip=" << ranges.beta_clip << "\ndistance_min=" << ranges.distance_min
    << "\ndistance_max=" << ranges.distance_max << "\nlateral=" << ranges.lateral << "\nbbox_margin=" << ranges.bbox_margin
    << "\nnoise_std=" << noise_std << "\nno_depth_fraction=" << no_depth_fraction << "\ntrain_fraction=" << train_fraction
    << "\n";
  return o.str();
}

std::uint64_t DataConfig::hash() const { return fnv1a(canonical()); }

BodyParams sample_params(const BodyTemplate& body, const DataConfig& config, std::uint64_t sample_seed) {
  const auto& r = config.ranges;
  std::mt19937_64 rng = make_rng(config.seed, sample_seed, 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), u01(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);

  BodyParams p;
  p.pose.assign(static_cast<std::size_t>(body.num_joints * 3), 0.0);
  const Mat3 root = mul(rot_y(unit(rng) * r.root_yaw_deg * kDeg),
                        mul(rot_x(unit(rng) * r.root_tilt_deg * kDeg), rot_z(unit(rng) * r.root_tilt_deg * kDeg)));
  const Vec3 root_aa = matrix_to_axis_angle(root);
  std::copy(root_aa.begin(), root_aa.end(), p.pose.begin());
  for (int k = 1; k < body.num_joints; ++k) {
    Vec3 axis{nd(rng), nd(rng), nd(rng)};
    const double n = norm(axis);
    const double angle = u01(rng) * r.max_joint_angle_deg * kDeg;
    for (int c = 0; c < 3; ++c) p.pose[static_cast<std::size_t>(k * 3 + c)] = n > 0 ? axis[static_cast<std::size_t>(c)] / n * angle : 0.0;
  }
  p.betas.resize(static_cast<std::size_t>(body.num_shape));
  for (double& b : p.betas) b = r.beta_std * std::clamp(nd(rng), -r.beta_clip, r.beta_clip);

  // Centre the body's vertical extent on the sampled offset.
  double lo = 1e300, hi = -1e300;
  for (int v = 0; v < body.num_verts; ++v) {
    lo = std::min(lo, body.vertices_rest[static_cast<std::size_t>(v * 3 + 1)]);
    hi = std::max(hi, body.vertices_rest[static_cast<std::size_t>(v * 3 + 1)]);
  }
  const double d = r.distance_min + u01(rng) * (r.distance_max - r.distance_min);
  p.translation = {unit(rng) * r.lateral * d, unit(rng) * r.lateral * d - 0.5 * (lo + hi), d};
  return p;
}

PerspectiveCamera crop_camera(const PerspectiveCamera& frame, const BBox& bbox, int size) {
  const double k = size / bbox.size;
  return {.focal = frame.focal * k,
          .cx0 = 0.5 * size + (frame.cx0 - bbox.cx) * k,
          .cy0 = 0.5 * size + (frame.cy0 - bbox.cy) * k,
          .width = size,
          .height = size};
}

BBox bbox_around(const PerspectiveCamera& cam, std::span<const double> points, double margin) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (std::size_t i = 0; i + 2 < points.size(); i += 3) {
    const double z = points[i + 2];
    if (z <= kZNear) throw GeometryError("bbox: point " + std::to_string(i / 3) + " is behind the camera");
    const double u = cam.focal * points[i] / z + cam.cx0, v = cam.focal * points[i + 1] / z + cam.cy0;
    x0 = std::min(x0, u);
    x1 = std::max(x1, u);
    y0 = std::min(y0, v);
    y1 = std::max(y1, v);
  }
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), std::max(x1 - x0, y1 - y0) * (1.0 + margin)};
}

Sample render_sample(const BodyTemplate& body, const BodyParams& params, const DataConfig& config,
                     std::uint64_t style_seed, bool has_depth) {
  const int K = body.num_joints, S = config.input_size, T = S / 4;
  if (static_cast<int>(params.pose.size()) != K * 3 || static_cast<int>(params.betas.size()) != body.num_shape) {
    throw ShapeError("render_sample: parameter sizes do not match the body template");
  }
  Sample s;
  s.input_size = S;
  s.params = params;
  s.cam = config.frame;
  s.has_depth = has_depth;
  s.rotations.resize(static_cast<std::size_t>(K * 9));
  for (int k = 0; k < K; ++k) {
    const Mat3 R = axis_angle_to_matrix(
        Vec3{params.pose[static_cast<std::size_t>(k * 3)], params.pose[static_cast<std::size_t>(k * 3 + 1)],
             params.pose[static_cast<std::size_t>(k * 3 + 2)]});
    std::copy(R.begin(), R.end(), s.rotations.begin() + k * 9);
  }
  {
    NoGradGuard ng;
    const auto out = body_forward(body, Tensor::from_vector({1, K, 3, 3}, s.rotations),
                                  Tensor::from_vector({1, body.num_shape}, params.betas), Tensor::zeros({1, 3}));
    s.vertices.assign(out.vertices.data().begin(), out.vertices.data().end());
    s.joints3d.assign(out.joints.data().begin(), out.joints.data().end());
  }
  auto shifted = [&](const std::vector<double>& pts) {
    std::vector<double> o(pts);
    for (std::size_t i = 0; i < o.size(); i += 3)
      for (std::size_t c = 0; c < 3; ++c) o[i + c] += params.translation[c];
    return o;
  };
  const std::vector<double> verts = shifted(s.vertices), joints = shifted(s.joints3d);

  const auto& f = config.frame;
  bool visible = false;
  for (std::size_t i = 0; i < verts.size() && !visible; i += 3) {
    if (verts[i + 2] <= kZNear) continue;
    const double u = f.focal * verts[i] / verts[i + 2] + f.cx0, v = f.focal * verts[i + 1] / verts[i + 2] + f.cy0;
    visible = u >= 0 && u < f.width && v >= 0 && v < f.height;
  }
  if (!visible) throw GeometryError("render_sample: body is entirely outside the frame");

  s.bbox = bbox_around(f, verts, config.ranges.bbox_margin);
  s.joints2d.resize(static_cast<std::size_t>(K * 2));
  for (int k = 0; k < K; ++k) {
    const double z = joints[static_cast<std::size_t>(k * 3 + 2)];
    s.joints2d[static_cast<std::size_t>(k * 2)] = f.focal * joints[static_cast<std::size_t>(k * 3)] / z + f.cx0;
    s.joints2d[static_cast<std::size_t>(k * 2 + 1)] = f.focal * joints[static_cast<std::size_t>(k * 3 + 1)] / z + f.cy0;
  }

  const PerspectiveCamera crop = crop_camera(f, s.bbox, S);
  const RasterResult full = rasterize(verts, body.faces, body.part_labels, crop, S, S);
  const RasterResult quarter = rasterize(verts, body.faces, body.part_labels, crop, T, T);
  s.depth = normalize_depth(quarter.depth).depth;
  s.parts = quarter.parts;

  // Shaded part colours over a gradient background, then colour jitter and noise.
  std::mt19937_64 rng = make_rng(config.seed, style_seed, 2);
  std::uniform_real_distribution<double> u01(0.0, 1.0), gain(0.8, 1.2);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::array<double, 3> bg0{}, bg1{}, jitter{};
  for (int c = 0; c < 3; ++c) {
    bg0[static_cast<std::size_t>(c)] = u01(rng);
    bg1[static_cast<std::size_t>(c)] = u01(rng);
    jitter[static_cast<std::size_t>(c)] = gain(rng);
  }
  const auto& palette = part_palette();
  s.image.assign(static_cast<std::size_t>(3 * S * S), 0.0);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const std::size_t p = static_cast<std::size_t>(y * S + x);
      const std::int32_t face = full.face_ids[p];
      double shade = 0.0;
      if (face >= 0) {
        Vec3 v[3];
        for (int i = 0; i < 3; ++i) {
          const auto idx = static_cast<std::size_t>(body.faces[static_cast<std::size_t>(face * 3 + i)]) * 3;
          v[i] = {verts[idx], verts[idx + 1], verts[idx + 2]};
        }
        const Vec3 n = cross(v[1] - v[0], v[2] - v[0]);
        const Vec3 centre = (1.0 / 3.0) * (v[0] + v[1] + v[2]);
        const double nn = norm(n) * norm(centre);
        shade = 0.35 + 0.65 * (nn > 0 ? std::fabs(dot(n, centre)) / nn : 0.0);
      }
      const double t = (x + y) / (2.0 * S);
      for (int c = 0; c < 3; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        double value = face >= 0 ? palette[static_cast<std::size_t>(full.parts[p])][cc] / 255.0 * shade * jitter[cc]
                                 : (1 - t) * bg0[cc] + t * bg1[cc];
        if (config.noise_std > 0) value += config.noise_std * noise(rng);
        s.image[static_cast<std::size_t>(c * S * S) + p] = std::clamp(value, 0.0, 1.0);
      }
    }
  s.validate();
  return s;
}

Sample generate_sample(const BodyTemplate& body, const DataConfig& config, std::int64_t index) {
  const auto seed = static_cast<std::uint64_t>(index);
  const BodyParams p = sample_params(body, config, seed);
  std::mt19937_64 rng = make_rng(config.seed, seed, 3);
  const bool has_depth = std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= config.no_depth_fraction;
  return render_sample(body, p, config, seed, has_depth);
}

std::vector<Sample> generate_dataset(const BodyTemplate& body, const DataConfig& config) {
  config.validate();
  std::vector<Sample> out(static_cast<std::size_t>(config.count));
  parallel_for(config.count, [&](std::int64_t i) { out[static_cast<std::size_t>(i)] = generate_sample(body, config, i); });
  return out;
}

void Sample::validate() const {
  const int T = target_size();
  if (input_size <= 0 || input_size % 4 != 0) throw FormatError("sample: invalid input size");
  if (image.size() != static_cast<std::size_t>(3 * input_size * input_size)) throw FormatError("sample: image size mismatch");
  if (depth.size() != static_cast<std::size_t>(T * T) || parts.size() != depth.size()) {
    throw FormatError("sample: target maps must be " + std::to_string(T) + "x" + std::to_string(T));
  }
  for (double v : image)
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("sample: image values must lie in [0,1]");
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (parts[i] < 0 || parts[i] >= kNumParts) throw FormatError("sample: part label out of range at " + std::to_string(i));
    if ((depth[i] > 0.0) != (parts[i] > 0)) throw FormatError("sample: depth and part supports differ at " + std::to_string(i));
    if (depth[i] != 0.0 && !(depth[i] >= 0.1 && depth[i] <= 1.0)) throw FormatError("sample: depth outside [0.1,1]");
  }
  const std::size_t K = rotations.size() / 9;
  if (joints3d.size() != K * 3 || joints2d.size() != K * 2 || params.pose.size() != K * 3 || vertices.size() % 3 != 0) {
    throw FormatError("sample: inconsistent joint counts");
  }
  if (!(bbox.size > 0.0)) throw FormatError("sample: bbox size must be positive");
}

Container sample_to_container(const Sample& s) {
  const auto K = static_cast<std::int64_t>(s.rotations.size() / 9);
  const auto N = static_cast<std::int64_t>(s.vertices.size() / 3);
  const std::int64_t S = s.input_size, T = s.target_size();
  Container c;
  c.add(Record::i32("input_size", {1}, std::vector<std::int32_t>{s.input_size}));
  c.add(vec_record("image", {3, S, S}, s.image));
  c.add(vec_record("depth", {T, T}, s.depth));
  c.add(vec_record("parts", {T, T}, s.parts));
  c.add(vec_record("pose", {K, 3}, s.params.pose));
  c.add(vec_record("betas", {static_cast<std::int64_t>(s.params.betas.size())}, s.params.betas));
  c.add(Record::f64("translation", {3}, s.params.translation));
  c.add(vec_record("rotations", {K, 3, 3}, s.rotations));
  c.add(vec_record("joints3d", {K, 3}, s.joints3d));
  c.add(vec_record("vertices", {N, 3}, s.vertices));
  c.add(vec_record("joints2d", {K, 2}, s.joints2d));
  c.add(Record::f64("bbox", {3}, std::vector<double>{s.bbox.cx, s.bbox.cy, s.bbox.size}));
  c.add(Record::f64("camera", {5}, std::vector<double>{s.cam.focal, s.cam.cx0, s.cam.cy0, static_cast<double>(s.cam.width),
                                                       static_cast<double>(s.cam.height)}));
  c.add(Record::u8("has_depth", {1}, std::vector<std::uint8_t>{static_cast<std::uint8_t>(s.has_depth)}));
  return c;
}

Sample sample_from_container(const Container& c) {
  Sample s;
  const auto size = c.get("input_size").as_i32();
  if (size.size() != 1) throw FormatError("sample: input_size record must hold one value");
  s.input_size = size[0];
  if (s.input_size <= 0 || s.input_size % 4 != 0) throw FormatError("sample: invalid input size");
  const std::int64_t S = s.input_size, T = S / 4;
  s.image = f64_of(c, "image", 3 * S * S);
  s.depth = f64_of(c, "depth", T * T);
  s.parts = c.get("parts").as_i32();
  const Record& rot = c.get("rotations");
  const std::int64_t K = rot.numel() / 9;
  s.rotations = rot.as_f64();
  s.params.pose = f64_of(c, "pose", K * 3);
  s.params.betas = c.get("betas").as_f64();
  const auto t = f64_of(c, "translation", 3);
  s.params.translation = {t[0], t[1], t[2]};
  s.joints3d = f64_of(c, "joints3d", K * 3);
  s.vertices = c.get("vertices").as_f64();
  s.joints2d = f64_of(c, "joints2d", K * 2);
  const auto b = f64_of(c, "bbox", 3);
  s.bbox = {b[0], b[1], b[2]};
  const auto cam = f64_of(c, "camera", 5);
  s.cam = {cam[0], cam[1], cam[2], static_cast<int>(cam[3]), static_cast<int>(cam[4])};
  const auto hd = c.get("has_depth").as_u8();
  if (hd.size() != 1) throw FormatError("sample: has_depth record must hold one value");
  s.has_depth = hd[0] != 0;
  s.validate();
  return s;
}

std::string DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format"] = "dpose-dataset";
  j["version"] = version;
  j["count"] = offsets.size();
  j["config_hash"] = config_hash;
  j["config"] = config_text;
  j["input_size"] = input_size;
  j["body"] = {{"joints", body.joints}, {"shape_dims", body.shape_dims}, {"verts_per_bone", body.verts_per_bone},
               {"seed", body.seed}};
  j["records"] = {{"file", "records.bin"}, {"offsets", offsets}, {"sizes", sizes}};
  j["split"] = {{"train", train}, {"val", val}};
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "dpose-dataset") throw FormatError("manifest: not a dataset manifest");
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw FormatError("manifest: unsupported version " + std::to_string(m.version));
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    m.input_size = j.at("input_size").get<int>();
    const auto& b = j.at("body");
    m.body.joints = b.at("joints").get<int>();
    m.body.shape_dims = b.at("shape_dims").get<int>();
    m.body.verts_per_bone = b.at("verts_per_bone").get<int>();
    m.body.seed = b.at("seed").get<std::uint64_t>();
    m.offsets = j.at("records").at("offsets").get<std::vector<std::int64_t>>();
    m.sizes = j.at("records").at("sizes").get<std::vector<std::int64_t>>();
    m.train = j.at("split").at("train").get<std::vector<std::int64_t>>();
    m.val = j.at("split").at("val").get<std::vector<std::int64_t>>();
    if (j.at("count").get<std::size_t>() != m.offsets.size()) throw FormatError("manifest: count does not match offsets");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (m.sizes.size() != m.offsets.size()) throw FormatError("manifest: offsets and sizes differ in length");
  for (std::size_t i = 0; i < m.offsets.size(); ++i) {
    if (m.sizes[i] <= 0 || m.offsets[i] < 0) throw FormatError("manifest: invalid record extent " + std::to_string(i));
    if (i > 0 && m.offsets[i] != m.offsets[i - 1] + m.sizes[i - 1]) {
      throw FormatError("manifest: record offsets must be strictly increasing and contiguous");
    }
  }
  if (fnv1a(m.config_text) != std::stoull(m.config_hash, nullptr, 16)) {
    throw FormatError("manifest: config hash does not match the stored configuration");
  }
  return m;
}

void write_dataset(const std::filesystem::path& dir, const DataConfig& config, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.config_text = config.canonical();
  m.config_hash = hash_hex(fnv1a(m.config_text));
  m.input_size = config.input_size;
  m.body = config.body;
  std::vector<std::uint8_t> blob;
  for (const Sample& s : samples) {
    s.validate();
    if (s.input_size != config.input_size) throw ConfigError("write_dataset: sample input size differs from config");
    const auto bytes = sample_to_container(s).serialize();
    m.offsets.push_back(static_cast<std::int64_t>(blob.size()));
    m.sizes.push_back(static_cast<std::int64_t>(bytes.size()));
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  const auto n = static_cast<std::int64_t>(samples.size());
  const auto n_train = static_cast<std::int64_t>(std::llround(config.train_fraction * static_cast<double>(n)));
  for (std::int64_t i = 0; i < n; ++i) (i < n_train ? m.train : m.val).push_back(i);
  write_file_bytes(dir / "records.bin", blob);
  const std::string json = m.to_json();
  write_file_bytes(dir / "manifest.json", std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(json.data()), json.size()));
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto text_bytes = read_file_bytes(dir / "manifest.json");
  Dataset d;
  d.manifest = DatasetManifest::from_json(std::string(text_bytes.begin(), text_bytes.end()));
  const auto blob = read_file_bytes(dir / "records.bin");
  const auto& m = d.manifest;
  const std::int64_t total = m.offsets.empty() ? 0 : m.offsets.back() + m.sizes.back();
  if (total != static_cast<std::int64_t>(blob.size())) {
    throw FormatError("dataset: records.bin holds " + std::to_string(blob.size()) + " bytes, manifest expects " +
                      std::to_string(total));
  }
  for (std::size_t i = 0; i < m.offsets.size(); ++i) {
    const std::span<const std::uint8_t> rec(blob.data() + m.offsets[i], static_cast<std::size_t>(m.sizes[i]));
    try {
      d.samples.push_back(sample_from_container(Container::parse(rec)));
    } catch (const FormatError& e) {
      throw FormatError("dataset record " + std::to_string(i) + ": " + e.what());
    }
    if (d.samples.back().input_size != m.input_size) throw FormatError("dataset: record " + std::to_string(i) + " has the wrong input size");
  }
  return d;
}

}  // namespace dpose
