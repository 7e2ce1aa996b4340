// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpose/gradcheck.hpp"
#include "dpose/net.hpp"

namespace dpose {

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

struct GradCheckSuiteOptions {
  GradCheckOptions check{};   // h = 1e-5, tolerance 1e-4
  NetConfig pipeline{};       // input_size is forced to 32
  int pipeline_batch = 2;
  std::int64_t probes_per_parameter = 2;
  bool include_pipeline = true;
};

/// Finite-difference checks of every differentiable primitive, the body
/// model, the camera ops, the losses, attention pooling and finally the total
/// training loss of the whole network on generated 32x32 samples, probing
/// every trainable parameter tensor. `progress` sees each result as it lands.
std::vector<NamedGradCheck> gradcheck_suite(const GradCheckSuiteOptions& options = {},
                                            const std::function<void(const NamedGradCheck&)>& progress = {});

}  // namespace dpose
