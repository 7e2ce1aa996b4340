// SPDX-License-Identifier: Apache-2.0
#include "dpose/net.hpp"

#include <cmath>
#include <string>

#include "dpose/error.hpp"

namespace dpose {

using Index = std::int64_t;

namespace {

std::string level_name(const std::string& prefix, int level) { return prefix + std::to_string(level); }

Tensor upsample_times(Tensor x, int times) {
  for (int i = 0; i < times; ++i) x = upsample_bilinear2x(x);
  return x;
}

}  // namespace

void NetConfig::validate() const {
  if (input_size <= 0 || input_size % 32 != 0) {
    throw ConfigError("net: input_size must be a positive multiple of 32, got " + std::to_string(input_size));
  }
  for (int i = 0; i < 4; ++i)
    if (channels[static_cast<std::size_t>(i)] <= 0) throw ConfigError("net: channel counts must be positive");
  if (residual_blocks < 0) throw ConfigError("net: residual_blocks must be >= 0");
  if (head_hidden <= 0) throw ConfigError("net: head_hidden must be positive");
}

NetConfig full_scale_net_config() {
  NetConfig c;
  c.input_size = 224;
  c.channels = {384, 192, 96, 48};
  return c;
}

// ---------------------------------------------------------------------------

Tensor ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (index_.count(name)) throw ConfigError("parameter '" + name + "' registered twice");
  value.set_requires_grad(trainable);
  index_[name] = entries_.size();
  entries_.emplace_back(name, value);
  trainable_.push_back(trainable);
  return value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (trainable_[i]) out.push_back(entries_[i].second);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (trainable_[i]) out.push_back(entries_[i].first);
  return out;
}

std::int64_t ParamStore::trainable_count() const {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (trainable_[i]) n += entries_[i].second.numel();
  return n;
}

void ParamStore::save_to(Container& c, const std::string& prefix) const {
  for (const auto& [name, t] : entries_) c.add_tensor(prefix + name, t);
}

void ParamStore::load_from(const Container& c, const std::string& prefix) {
  for (auto& [name, t] : entries_) {
    const Record& r = c.get(prefix + name);
    if (r.shape != t.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(r.shape) + ", expected " +
                        shape_str(t.shape()));
    }
    const auto v = r.as_f64();
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  }
}

// ---------------------------------------------------------------------------

Tensor attend(const Tensor& parts_logits, const Tensor& fused, const Tensor& depth_pen) {
  if (parts_logits.ndim() != 4 || parts_logits.dim(1) != kNumParts) {
    throw ShapeError("attend: part logits must be [B,23,h,w], got " + shape_str(parts_logits.shape()));
  }
  const Index B = parts_logits.dim(0), h = parts_logits.dim(2), w = parts_logits.dim(3);
  auto check = [&](const Tensor& t, const char* what) {
    if (t.ndim() != 4 || t.dim(0) != B || t.dim(2) != h || t.dim(3) != w) {
      throw ShapeError(std::string("attend: ") + what + " " + shape_str(t.shape()) + " does not match part logits " +
                       shape_str(parts_logits.shape()));
    }
  };
  check(fused, "fused features");
  const Tensor attn = reshape(spatial_softmax(slice(parts_logits, 1, 1, kNumParts)), {B, kNumJoints, h * w});
  Tensor out = contract_attention(attn, reshape(fused, {B, fused.dim(1), h * w}));
  if (depth_pen.defined()) {
    check(depth_pen, "depth features");
    out = concat({out, contract_attention(attn, reshape(depth_pen, {B, depth_pen.dim(1), h * w}))}, 2);
  }
  return out;
}

// ---------------------------------------------------------------------------

DPoseNet::DPoseNet(NetConfig config, int shape_dims)
    : config_(config), shape_dims_(shape_dims), init_rng_(config.seed) {
  config_.validate();
  const auto& c = config_.channels;
  add_conv_bn("enc.stem1", 3, c[3], 3);
  add_conv_bn("enc.stem2", c[3], c[3], 3);
  add_residual("enc.block3", c[3]);
  for (int level = 2; level >= 0; --level) {
    add_conv_bn(level_name("enc.down", level), c[static_cast<std::size_t>(level + 1)], c[static_cast<std::size_t>(level)], 3);
    add_residual(level_name("enc.block", level), c[static_cast<std::size_t>(level)]);
  }
  for (int level = 1; level < 4; ++level)
    add_conv_bn(level_name("enc.fuse", level), c[static_cast<std::size_t>(level - 1)], c[static_cast<std::size_t>(level)], 1);

  if (config_.use_depth) add_decoder("dec_depth", 1);
  add_decoder("dec_parts", kNumParts);

  const int in = config_.joint_features() + 3;
  const double pose_std = 0.1 / std::sqrt(static_cast<double>(in));
  std::normal_distribution<double> nd(0.0, pose_std);
  std::vector<double> w(static_cast<std::size_t>(kNumJoints * in * 6));
  for (double& v : w) v = nd(init_rng_);
  params_.add("reg.pose.weight", Tensor::from_vector({kNumJoints, in, 6}, std::move(w)), true);
  std::vector<double> b;
  for (int j = 0; j < kNumJoints; ++j) b.insert(b.end(), {1, 0, 0, 0, 1, 0});
  params_.add("reg.pose.bias", Tensor::from_vector({kNumJoints, 6}, std::move(b)), true);

  const int flat = kNumJoints * in;
  const int hid = config_.head_hidden;
  add_linear("reg.cam.fc1", flat, hid, std::sqrt(2.0 / flat));
  add_linear("reg.cam.fc2", hid, 3, 1e-3);
  add_linear("reg.shape.fc1", flat, hid, std::sqrt(2.0 / flat));
  add_linear("reg.shape.fc2", hid, shape_dims_, 1e-3);
}

void DPoseNet::add_conv(const std::string& name, int in, int out, int kernel, double std, bool bias) {
  std::normal_distribution<double> nd(0.0, std);
  std::vector<double> w(static_cast<std::size_t>(out * in * kernel * kernel));
  for (double& v : w) v = nd(init_rng_);
  params_.add(name + ".weight", Tensor::from_vector({out, in, kernel, kernel}, std::move(w)), true);
  if (bias) params_.add(name + ".bias", Tensor::zeros({out}), true);
}

void DPoseNet::add_bn(const std::string& name, int channels) {
  params_.add(name + ".gamma", Tensor::full({channels}, 1.0), true);
  params_.add(name + ".beta", Tensor::zeros({channels}), true);
  params_.add(name + ".running_mean", Tensor::zeros({channels}), false);
  params_.add(name + ".running_var", Tensor::full({channels}, 1.0), false);
}

void DPoseNet::add_conv_bn(const std::string& name, int in, int out, int kernel) {
  add_conv(name + ".conv", in, out, kernel, std::sqrt(2.0 / (in * kernel * kernel)), false);
  add_bn(name + ".bn", out);
}

void DPoseNet::add_residual(const std::string& name, int channels) {
  add_conv_bn(name + ".a", channels, channels, 3);
  add_conv_bn(name + ".b", channels, channels, 3);
}

void DPoseNet::add_decoder(const std::string& name, int out_channels) {
  const auto& c = config_.channels;
  for (int level = 1; level < 4; ++level) {
    const int prev = c[static_cast<std::size_t>(level - 1)], cur = c[static_cast<std::size_t>(level)];
    add_conv_bn(name + level_name(".up", level), prev, cur, 1);
    add_conv_bn(name + level_name(".merge", level), 2 * cur, cur, 1);
    for (int r = 0; r < config_.residual_blocks; ++r)
      add_residual(name + level_name(".res", level) + "_" + std::to_string(r), cur);
  }
  add_conv_bn(name + ".head.mid", c[3], c[3], 3);
  add_conv(name + ".head.out", c[3], out_channels, 1, 0.01, true);
}

void DPoseNet::add_linear(const std::string& name, int in, int out, double std) {
  std::normal_distribution<double> nd(0.0, std);
  std::vector<double> w(static_cast<std::size_t>(in * out));
  for (double& v : w) v = nd(init_rng_);
  params_.add(name + ".weight", Tensor::from_vector({in, out}, std::move(w)), true);
  params_.add(name + ".bias", Tensor::zeros({out}), true);
}

Tensor DPoseNet::conv(const std::string& name, const Tensor& x, int stride) const {
  const Tensor& w = params_.get(name + ".weight");
  const Tensor bias = params_.contains(name + ".bias") ? params_.get(name + ".bias") : Tensor::zeros({w.dim(0)});
  return conv2d(x, w, bias, stride, static_cast<int>(w.dim(2) / 2));
}

Tensor DPoseNet::bn(const std::string& name, const Tensor& x, Mode mode) {
  Tensor rm = params_.get(name + ".running_mean");
  Tensor rv = params_.get(name + ".running_var");
  return batchnorm2d(x, params_.get(name + ".gamma"), params_.get(name + ".beta"), rm, rv, mode);
}

Tensor DPoseNet::conv_bn(const std::string& name, const Tensor& x, int stride, Mode mode, bool relu_out) {
  Tensor y = bn(name + ".bn", conv(name + ".conv", x, stride), mode);
  return relu_out ? relu(y) : y;
}

Tensor DPoseNet::residual(const std::string& name, const Tensor& x, Mode mode) {
  return add(x, conv_bn(name + ".b", conv_bn(name + ".a", x, 1, mode), 1, mode));
}

Tensor DPoseNet::linear_layer(const std::string& name, const Tensor& x) const {
  return linear(x, params_.get(name + ".weight"), params_.get(name + ".bias"));
}

Tensor DPoseNet::stem_preactivation(const Tensor& image) const { return conv("enc.stem1.conv", image, 2); }

FeaturePyramid DPoseNet::encode(const Tensor& image, Mode mode) {
  const int s = config_.input_size;
  if (image.ndim() != 4 || image.dim(1) != 3) throw ShapeError("encoder: image must be [B,3,H,W], got " + shape_str(image.shape()));
  if (image.dim(2) != s || image.dim(3) != s) {
    throw ShapeError("encoder: image is " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                     ", network expects " + std::to_string(s) + "x" + std::to_string(s));
  }
  std::array<Tensor, 4> x;
  Tensor h = conv_bn("enc.stem2", conv_bn("enc.stem1", image, 2, mode), 2, mode);
  x[3] = residual("enc.block3", h, mode);
  for (int level = 2; level >= 0; --level) {
    const auto l = static_cast<std::size_t>(level);
    x[l] = residual(level_name("enc.block", level), conv_bn(level_name("enc.down", level), x[l + 1], 2, mode), mode);
  }
  // Each level also receives the next coarser one, projected and upsampled.
  FeaturePyramid p;
  p.levels[0] = x[0];
  for (int level = 1; level < 4; ++level) {
    const auto l = static_cast<std::size_t>(level);
    const Tensor top = conv_bn(level_name("enc.fuse", level), x[l - 1], 1, mode, false);
    p.levels[l] = relu(add(x[l], upsample_bilinear2x(top)));
  }
  p.fused = concat({upsample_times(p.levels[0], 3), upsample_times(p.levels[1], 2), upsample_times(p.levels[2], 1),
                    p.levels[3]},
                   1);
  return p;
}

DecoderOutput DPoseNet::decode(const FeaturePyramid& pyramid, DecoderKind kind, Mode mode) {
  if (kind == DecoderKind::depth && !config_.use_depth) throw ConfigError("decoder: depth branch is disabled");
  const std::string name = kind == DecoderKind::depth ? "dec_depth" : "dec_parts";
  const auto& c = config_.channels;
  for (int level = 0; level < 4; ++level) {
    const Tensor& f = pyramid.levels[static_cast<std::size_t>(level)];
    if (f.ndim() != 4 || f.dim(1) != c[static_cast<std::size_t>(level)]) {
      throw ShapeError("decoder: pyramid level " + std::to_string(level) + " has shape " + shape_str(f.shape()) +
                       ", expected " + std::to_string(c[static_cast<std::size_t>(level)]) + " channels");
    }
  }
  Tensor x = pyramid.levels[0];
  for (int level = 1; level < 4; ++level) {
    const Tensor& skip = pyramid.levels[static_cast<std::size_t>(level)];
    Tensor up = conv_bn(name + level_name(".up", level), upsample_bilinear2x(x), 1, mode);
    if (up.dim(2) != skip.dim(2) || up.dim(3) != skip.dim(3)) {
      throw ShapeError("decoder: level " + std::to_string(level) + " upsampled to " + shape_str(up.shape()) +
                       " but skip is " + shape_str(skip.shape()));
    }
    x = conv_bn(name + level_name(".merge", level), concat({up, skip}, 1), 1, mode);
    for (int r = 0; r < config_.residual_blocks; ++r)
      x = residual(name + level_name(".res", level) + "_" + std::to_string(r), x, mode);
  }
  DecoderOutput out;
  out.penultimate = x;
  out.map = conv(name + ".head.out", conv_bn(name + ".head.mid", x, 1, mode), 1);
  if (kind == DecoderKind::depth) out.map = sigmoid(out.map);
  return out;
}

RegressorOutput DPoseNet::regress(const Tensor& perjoint, const Tensor& bbox_code) const {
  const Index cj = config_.joint_features();
  if (perjoint.ndim() != 3 || perjoint.dim(1) != kNumJoints || perjoint.dim(2) != cj) {
    throw ShapeError("regressor: per-joint features must be [B,22," + std::to_string(cj) + "], got " +
                     shape_str(perjoint.shape()));
  }
  const Index B = perjoint.dim(0);
  if (bbox_code.shape() != Shape{B, 3}) throw ShapeError("regressor: bbox code must be [B,3]");
  const Tensor code = add(reshape(bbox_code, {B, 1, 3}), Tensor::zeros({1, kNumJoints, 3}));
  const Tensor x = concat({perjoint, code}, 2);

  RegressorOutput out;
  out.pose6d = multilinear(x, params_.get("reg.pose.weight"), params_.get("reg.pose.bias"));
  out.rotations = rot6d_to_matrix(out.pose6d);
  const Tensor flat = reshape(x, {B, kNumJoints * (cj + 3)});
  const Tensor cam_raw = linear_layer("reg.cam.fc2", relu(linear_layer("reg.cam.fc1", flat)));
  // Scale is predicted in log space so it stays positive.
  out.cam = concat({exp(slice(cam_raw, 1, 0, 1)), slice(cam_raw, 1, 1, 3)}, 1);
  out.betas = linear_layer("reg.shape.fc2", relu(linear_layer("reg.shape.fc1", flat)));
  return out;
}

PipelineOutput DPoseNet::forward(const Tensor& image, std::span<const BBox> bboxes,
                                 std::span<const PerspectiveCamera> cams, const BodyTemplate& body, Mode mode) {
  const Index B = image.dim(0);
  if (static_cast<Index>(bboxes.size()) != B || static_cast<Index>(cams.size()) != B) {
    throw ShapeError("pipeline: need one bbox and camera per image");
  }
  PipelineOutput out;
  const FeaturePyramid pyr = encode(image, mode);
  out.parts = decode(pyr, DecoderKind::parts, mode);
  if (config_.use_depth) out.depth = decode(pyr, DecoderKind::depth, mode);
  out.attended = attend(out.parts.map, pyr.fused, out.depth.penultimate);

  std::vector<double> code;
  for (Index b = 0; b < B; ++b) {
    const auto e = encode_bbox(bboxes[static_cast<std::size_t>(b)], cams[static_cast<std::size_t>(b)]);
    code.insert(code.end(), e.begin(), e.end());
  }
  out.params = regress(out.attended, Tensor::from_vector({B, 3}, std::move(code)));

  const BodyOutput posed = body_forward(body, out.params.rotations, out.params.betas, Tensor::zeros({B, 3}));
  out.vertices = posed.vertices;
  out.joints3d = posed.joints;
  out.t_full = crop_to_full_translation(out.params.cam, bboxes, cams);
  out.joints2d = project(add(out.joints3d, reshape(out.t_full, {B, 1, 3})), cams);
  return out;
}

}  // namespace dpose
