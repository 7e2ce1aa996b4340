// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dpose/tensor.hpp"

namespace dpose {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // must stay 0
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m, v;  // one buffer per parameter
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // Throws NumericError if a parameter has no gradient buffer.
  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  AdamState state_;
};

double global_grad_norm(const std::vector<Tensor>& params);

/// Rescales all gradients so their joint 2-norm is at most `max_norm`.
/// Returns the factor applied (1 when already within the bound).
double clip_gradients(const std::vector<Tensor>& params, double max_norm);

}  // namespace dpose
