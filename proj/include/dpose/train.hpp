// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dpose/config.hpp"
#include "dpose/data.hpp"
#include "dpose/loss.hpp"
#include "dpose/metrics.hpp"
#include "dpose/net.hpp"
#include "dpose/optim.hpp"

namespace dpose {

struct Batch {
  Tensor image;  // [B,3,S,S]
  std::vector<BBox> bboxes;
  BatchTargets targets;
};

Batch make_batch(const std::vector<Sample>& samples, std::span<const std::int64_t> indices);

struct StepResult {
  std::int64_t step = 0;  // 1-based, after the update
  LossBreakdown loss;
  double grad_norm = 0.0;  // before clipping
};

class Trainer {
 public:
  /// `train` lists the sample indices to draw batches from (all when empty).
  Trainer(RunConfig config, const BodyTemplate& body, const std::vector<Sample>& samples,
          std::vector<std::int64_t> train = {});

  StepResult train_step();
  std::int64_t step() const { return step_; }
  DPoseNet& net() { return *net_; }
  const RunConfig& config() const { return config_; }

  /// Parameters, running statistics, optimiser moments and the step counter.
  Container checkpoint() const;
  void restore(const Container& c);

 private:
  std::vector<std::int64_t> next_indices();

  RunConfig config_;
  const BodyTemplate& body_;
  const std::vector<Sample>& samples_;
  std::vector<std::int64_t> train_;
  std::unique_ptr<DPoseNet> net_;
  std::unique_ptr<Adam> adam_;
  std::int64_t step_ = 0;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t epoch_ = 0;
};

/// The run configuration stored in a checkpoint.
RunConfig checkpoint_config(const Container& checkpoint);
/// A network rebuilt from a checkpoint's configuration and parameters.
std::unique_ptr<DPoseNet> load_network(const Container& checkpoint, const BodyTemplate& body);

/// Runs `iterations` steps. A fresh run starts `csv` with the header; every
/// log_every steps a CSV row goes to `csv`
/// (when given); every checkpoint_every steps and at the end a checkpoint is
/// written to out_dir/checkpoint.dpt (when out_dir is non-empty). On a
/// numeric failure the previous checkpoint is left in place and the error
/// propagates. Returns every step's losses.
std::vector<StepResult> run_training(Trainer& trainer, std::int64_t iterations, const std::filesystem::path& out_dir,
                                     std::ostream* csv, const std::function<void(const StepResult&)>& on_step = {});

/// Eval-mode predictions against ground truth, in millimetres.
EvalReport evaluate(DPoseNet& net, const BodyTemplate& body, const std::vector<Sample>& samples,
                    std::span<const std::int64_t> indices, int batch_size = 8);

}  // namespace dpose
