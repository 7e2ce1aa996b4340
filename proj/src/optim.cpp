// SPDX-License-Identifier: Apache-2.0
#include "dpose/optim.hpp"

#include <cmath>

#include "dpose/error.hpp"

namespace dpose {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (config_.weight_decay != 0.0) throw ConfigError("Adam: weight_decay must be 0");
  if (config_.lr < 0.0) throw ConfigError("Adam: negative learning rate");
  for (const auto& p : params_) {
    state_.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    state_.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k].has_grad()) {
      throw NumericError("Adam: parameter " + std::to_string(k) + " " + shape_str(params_[k].shape()) +
                         " has no gradient");
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].mutable_data();
    const auto grad = params_[k].grad();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      data[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

double global_grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  // The relative slack absorbs rounding in the rescaled norm so a second call is a no-op.
  if (!(norm > max_norm * (1.0 + 1e-12))) return 1.0;
  const double factor = max_norm / norm;
  for (auto p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g *= factor;
  }
  return factor;
}

}  // namespace dpose
