// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpose/tensor.hpp"

namespace dpose {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error; gradients smaller than this are
  // effectively compared in absolute terms (|a - n| / floor).
  double scale_floor = 1e-3;
  // Probe at most this many elements per input (randomly chosen); <= 0 probes all.
  std::int64_t max_probes_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t probes = 0;
  // Probes where the function is not smooth inside [x-h, x+h] (e.g. relu at
  // 0): second differences are O(1) or the h and h/2 central differences
  // disagree. They are reported, not counted as failures.
  std::int64_t excluded = 0;
  bool pass = false;
  std::string worst;  // "input i, element j" of the largest relative error
};

/// Compares reverse-mode gradients of the scalar `fn()` with respect to each
/// tensor in `inputs` against central differences. `fn` must read the inputs
/// by handle so in-place perturbation is visible to it.
GradCheckReport finite_diff_check(const std::function<Tensor()>& fn, std::vector<Tensor> inputs,
                                  const GradCheckOptions& options = {});

}  // namespace dpose
