// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dpose/data.hpp"
#include "dpose/loss.hpp"
#include "dpose/net.hpp"
#include "dpose/optim.hpp"

namespace dpose {

/// Everything a run needs. Defaults are the full-scale recipe; the desk
/// preset overrides sizes and learning rate explicitly.
struct RunConfig {
  std::string preset = "paper";
  NetConfig net = full_scale_net_config();
  LossWeights loss{};
  AdamConfig adam{};  // lr 1e-5, betas 0.9 / 0.999, no weight decay
  double clip_norm = 1.5;
  int batch_size = 64;
  std::int64_t iterations = 200000;
  std::uint64_t seed = 0;
  std::int64_t log_every = 10;
  std::int64_t checkpoint_every = 500;
  DataConfig data{};
  bool deterministic = false;

  void validate() const;
  /// key=value lines, one per field; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// "desk" or "paper"; throws ConfigError otherwise.
RunConfig preset_config(const std::string& name);

}  // namespace dpose
