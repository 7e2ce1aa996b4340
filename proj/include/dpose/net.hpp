// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpose/body.hpp"
#include "dpose/camproj.hpp"
#include "dpose/container.hpp"
#include "dpose/ops.hpp"
#include "dpose/tensor.hpp"

namespace dpose {

struct NetConfig {
  int input_size = 64;
  std::array<int, 4> channels{96, 48, 24, 12};  // coarse (H/32) to fine (H/4)
  int residual_blocks = 4;                       // per decoder level
  int head_hidden = 128;                         // camera / shape MLP width
  bool use_depth = true;                         // depth decoder + depth features
  std::uint64_t seed = 0;

  int fused_channels() const { return channels[0] + channels[1] + channels[2] + channels[3]; }
  int feature_size() const { return input_size / 4; }
  /// Per-joint feature width entering the regressor (before bbox code).
  int joint_features() const { return fused_channels() + (use_depth ? channels[3] : 0); }
  /// Throws ConfigError on sizes the architecture cannot handle.
  void validate() const;
};

/// Full-scale shapes: 224 input, 720 fused channels.
NetConfig full_scale_net_config();

/// Ordered named tensors: trainable parameters plus batch-norm running buffers.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value, bool trainable);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Tensor> trainable() const;
  std::vector<std::string> trainable_names() const;
  std::int64_t trainable_count() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  void save_to(Container& c, const std::string& prefix = "param.") const;
  /// Copies values from c into the existing tensors (shapes must match).
  void load_from(const Container& c, const std::string& prefix = "param.");

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::vector<bool> trainable_;
  std::map<std::string, std::size_t> index_;
};

struct FeaturePyramid {
  std::array<Tensor, 4> levels;  // H/32, H/16, H/8, H/4
  Tensor fused;                  // every level resized to H/4, concatenated
};

struct DecoderOutput {
  Tensor map;          // [B, C_out, H/4, W/4]; sigmoid applied for depth
  Tensor penultimate;  // [B, c3, H/4, W/4]
};

struct RegressorOutput {
  Tensor pose6d;     // [B, 22, 6]
  Tensor rotations;  // [B, 22, 3, 3]
  Tensor betas;      // [B, 11]
  Tensor cam;        // [B, 3] = (s, tx, ty), s > 0
};

struct PipelineOutput {
  DecoderOutput depth;  // undefined tensors when use_depth is off
  DecoderOutput parts;
  Tensor attended;      // [B, 22, joint_features]
  RegressorOutput params;
  Tensor t_full;        // [B, 3]
  Tensor vertices;      // [B, N, 3], body frame
  Tensor joints3d;      // [B, 22, 3], body frame
  Tensor joints2d;      // [B, 22, 2], full-frame pixels
};

enum class DecoderKind { depth, parts };

/// Drops part channel 0 (background), applies a spatial softmax to the other
/// 22, and pools `fused` (and `depth_pen` when defined) with those weights:
/// [B, 22, C_total (+ c3)].
Tensor attend(const Tensor& parts_logits, const Tensor& fused, const Tensor& depth_pen);

class DPoseNet {
 public:
  explicit DPoseNet(NetConfig config, int shape_dims = kNumShape);

  const NetConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// First convolution of the stem, before normalisation.
  Tensor stem_preactivation(const Tensor& image) const;
  FeaturePyramid encode(const Tensor& image, Mode mode);
  DecoderOutput decode(const FeaturePyramid& pyramid, DecoderKind kind, Mode mode);
  /// perjoint [B,22,Cj], bbox_code [B,3].
  RegressorOutput regress(const Tensor& perjoint, const Tensor& bbox_code) const;
  PipelineOutput forward(const Tensor& image, std::span<const BBox> bboxes, std::span<const PerspectiveCamera> cams,
                         const BodyTemplate& body, Mode mode);

 private:
  void add_conv(const std::string& name, int in, int out, int kernel, double std, bool bias);
  void add_bn(const std::string& name, int channels);
  void add_conv_bn(const std::string& name, int in, int out, int kernel);
  void add_residual(const std::string& name, int channels);
  void add_decoder(const std::string& name, int out_channels);
  void add_linear(const std::string& name, int in, int out, double std);
  Tensor conv(const std::string& name, const Tensor& x, int stride) const;
  Tensor bn(const std::string& name, const Tensor& x, Mode mode);
  Tensor conv_bn(const std::string& name, const Tensor& x, int stride, Mode mode, bool relu_out = true);
  Tensor residual(const std::string& name, const Tensor& x, Mode mode);
  Tensor linear_layer(const std::string& name, const Tensor& x) const;

  NetConfig config_;
  int shape_dims_;
  ParamStore params_;
  std::mt19937_64 init_rng_;
};

}  // namespace dpose
