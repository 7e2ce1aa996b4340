// SPDX-License-Identifier: Apache-2.0
#include "dpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dpose/error.hpp"

namespace dpose {

GradCheckReport finite_diff_check(const std::function<Tensor()>& fn, std::vector<Tensor> inputs,
                                  const GradCheckOptions& options) {
  for (auto& t : inputs) {
    if (!t.requires_grad()) throw NumericError("finite_diff_check: every input must require grad");
    t.zero_grad();
  }
  const Tensor loss = fn();
  if (loss.numel() != 1) throw ShapeError("finite_diff_check: function must return a scalar");
  loss.backward();

  auto eval = [&] {
    NoGradGuard guard;
    return fn().item();
  };
  const double f0 = eval();
  const double h = options.h;

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::int64_t> probes(static_cast<std::size_t>(t.numel()));
    std::iota(probes.begin(), probes.end(), 0);
    if (options.max_probes_per_input > 0 && t.numel() > options.max_probes_per_input) {
      std::shuffle(probes.begin(), probes.end(), rng);
      probes.resize(static_cast<std::size_t>(options.max_probes_per_input));
      std::sort(probes.begin(), probes.end());
    }
    auto data = t.mutable_data();
    for (auto idx : probes) {
      const auto i = static_cast<std::size_t>(idx);
      const double x = data[i];
      auto at = [&](double delta) {
        data[i] = x + delta;
        const double v = eval();
        data[i] = x;
        return v;
      };
      const double fp = at(h), fm = at(-h), fp2 = at(h / 2), fm2 = at(-h / 2);
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[i];
      // Second differences scale with h for smooth f; a kink makes them O(1).
      const double d1 = (fp - 2 * f0 + fm) / h;
      const double d2 = (fp2 - 2 * f0 + fm2) / (h / 2);
      const double scale = std::max({std::fabs(a), std::fabs(numeric), options.scale_floor});
      ++report.probes;
      // A kink between x-h and x+h also shows up as central differences at h
      // and h/2 that disagree; for smooth f they differ by O(h^2).
      const double numeric_half = (fp2 - fm2) / h;
      if (std::fabs(d1 - 2 * d2) > 0.1 * scale || std::fabs(numeric - numeric_half) > 0.5 * options.tolerance * scale) {
        ++report.excluded;
        continue;
      }
      const double abs_err = std::fabs(a - numeric);
      const double rel = abs_err / scale;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "input " + std::to_string(k) + ", element " + std::to_string(idx);
      }
    }
  }
  report.pass = report.max_rel_err < options.tolerance;
  return report;
}

}  // namespace dpose
