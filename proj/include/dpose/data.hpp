// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpose/body.hpp"
#include "dpose/camproj.hpp"
#include "dpose/container.hpp"

namespace dpose {

struct SamplingRanges {
  double max_joint_angle_deg = 60.0;  // per non-root joint
  double root_yaw_deg = 180.0;        // root yaw drawn from [-v, v]
  double root_tilt_deg = 10.0;        // root pitch/roll
  double beta_std = 1.0;
  double beta_clip = 2.5;             // in units of beta_std
  double distance_min = 2.0, distance_max = 5.0;
  double lateral = 0.08;              // x/y offset as a fraction of distance
  double bbox_margin = 0.1;

  void validate() const;
};

struct DataConfig {
  int count = 8;
  std::uint64_t seed = 0;
  int input_size = 64;
  PerspectiveCamera frame{};
  BodyConfig body{};
  SamplingRanges ranges{};
  double noise_std = 0.02;
  double no_depth_fraction = 0.0;  // samples supervised without depth
  double train_fraction = 1.0;

  void validate() const;
  /// Canonical key=value text; its FNV-1a hash identifies the generator setup.
  std::string canonical() const;
  std::uint64_t hash() const;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

struct BodyParams {
  std::vector<double> pose;     // K x 3 axis-angle, joint 0 = global orientation
  std::vector<double> betas;    // S
  Vec3 translation{0, 0, 0};   // camera frame, metres
};

struct Sample {
  int input_size = 0;
  std::vector<double> image;           // 3 x S x S, planar, in [0,1]
  std::vector<double> depth;           // (S/4)^2, normalised, 0 = background
  std::vector<std::int32_t> parts;     // (S/4)^2
  BodyParams params;
  std::vector<double> rotations;       // K x 9
  std::vector<double> joints3d;        // K x 3, body frame (no translation)
  std::vector<double> vertices;        // N x 3, body frame
  std::vector<double> joints2d;        // K x 2, full-frame pixels
  BBox bbox;
  PerspectiveCamera cam;
  bool has_depth = true;

  int target_size() const { return input_size / 4; }
  void validate() const;
};

/// Draws pose, shape, translation and the square bbox around the projected mesh.
BodyParams sample_params(const BodyTemplate& body, const DataConfig& config, std::uint64_t sample_seed);

/// The crop intrinsics seen by an S x S image of bbox.
PerspectiveCamera crop_camera(const PerspectiveCamera& frame, const BBox& bbox, int size);

/// Tight square box around the projected points with the given margin.
BBox bbox_around(const PerspectiveCamera& cam, std::span<const double> points, double margin);

/// Renders image and targets. style_seed drives background, colour jitter and noise.
Sample render_sample(const BodyTemplate& body, const BodyParams& params, const DataConfig& config,
                     std::uint64_t style_seed, bool has_depth = true);

/// Sample i of the dataset described by config; a pure function of (config, i).
Sample generate_sample(const BodyTemplate& body, const DataConfig& config, std::int64_t index);
std::vector<Sample> generate_dataset(const BodyTemplate& body, const DataConfig& config);

Container sample_to_container(const Sample& s);
Sample sample_from_container(const Container& c);

struct DatasetManifest {
  int version = 1;
  std::string config_hash;
  std::string config_text;
  int input_size = 64;
  BodyConfig body{};
  std::vector<std::int64_t> offsets;  // byte offset of each record in records.bin
  std::vector<std::int64_t> sizes;
  std::vector<std::int64_t> train, val;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

/// Writes <dir>/manifest.json and <dir>/records.bin.
void write_dataset(const std::filesystem::path& dir, const DataConfig& config, const std::vector<Sample>& samples);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace dpose
