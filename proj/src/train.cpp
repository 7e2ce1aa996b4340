// SPDX-License-Identifier: Apache-2.0
#include "dpose/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "dpose/error.hpp"
#include "dpose/parallel.hpp"

namespace dpose {

using Index = std::int64_t;

Batch make_batch(const std::vector<Sample>& samples, std::span<const Index> indices) {
  if (indices.empty()) throw ShapeError("make_batch: empty batch");
  const Sample& first = samples.at(static_cast<std::size_t>(indices[0]));
  const Index B = static_cast<Index>(indices.size()), S = first.input_size, T = first.target_size();
  const Index K = static_cast<Index>(first.rotations.size() / 9), N = static_cast<Index>(first.vertices.size() / 3);
  const Index nb = static_cast<Index>(first.params.betas.size());
  std::vector<double> image, depth, rot, betas, j3, j2, verts;
  Batch b;
  auto& t = b.targets;
  for (Index i : indices) {
    const Sample& s = samples.at(static_cast<std::size_t>(i));
    if (s.input_size != S || static_cast<Index>(s.vertices.size()) != N * 3) {
      throw ShapeError("make_batch: sample " + std::to_string(i) + " differs in size from the batch");
    }
    image.insert(image.end(), s.image.begin(), s.image.end());
    depth.insert(depth.end(), s.depth.begin(), s.depth.end());
    t.parts.insert(t.parts.end(), s.parts.begin(), s.parts.end());
    t.has_depth.push_back(s.has_depth);
    rot.insert(rot.end(), s.rotations.begin(), s.rotations.end());
    betas.insert(betas.end(), s.params.betas.begin(), s.params.betas.end());
    j3.insert(j3.end(), s.joints3d.begin(), s.joints3d.end());
    j2.insert(j2.end(), s.joints2d.begin(), s.joints2d.end());
    verts.insert(verts.end(), s.vertices.begin(), s.vertices.end());
    t.cams.push_back(s.cam);
    b.bboxes.push_back(s.bbox);
  }
  b.image = Tensor::from_vector({B, 3, S, S}, std::move(image));
  t.depth = Tensor::from_vector({B, 1, T, T}, std::move(depth));
  t.rotations = Tensor::from_vector({B, K, 3, 3}, std::move(rot));
  t.betas = Tensor::from_vector({B, nb}, std::move(betas));
  t.joints3d = Tensor::from_vector({B, K, 3}, std::move(j3));
  t.joints2d = Tensor::from_vector({B, K, 2}, std::move(j2));
  t.vertices = Tensor::from_vector({B, N, 3}, std::move(verts));
  return b;
}

Trainer::Trainer(RunConfig config, const BodyTemplate& body, const std::vector<Sample>& samples, std::vector<Index> train)
    : config_(std::move(config)), body_(body), samples_(samples), train_(std::move(train)) {
  config_.validate();
  if (train_.empty()) {
    train_.resize(samples_.size());
    std::iota(train_.begin(), train_.end(), Index{0});
  }
  if (train_.empty()) throw ConfigError("trainer: no training samples");
  for (Index i : train_) {
    const auto& s = samples_.at(static_cast<std::size_t>(i));
    if (s.input_size != config_.net.input_size) {
      throw ConfigError("trainer: sample " + std::to_string(i) + " is " + std::to_string(s.input_size) +
                        " px but the network expects " + std::to_string(config_.net.input_size));
    }
  }
  if (config_.deterministic) set_num_threads(1);
  net_ = std::make_unique<DPoseNet>(config_.net, body.num_shape);
  adam_ = std::make_unique<Adam>(net_->params().trainable(), config_.adam);
}

std::vector<Index> Trainer::next_indices() {
  std::vector<Index> out;
  while (static_cast<int>(out.size()) < config_.batch_size) {
    if (cursor_ >= order_.size()) {
      order_ = train_;
      std::mt19937_64 rng(config_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch_++));
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

StepResult Trainer::train_step() {
  const auto idx = next_indices();
  const Batch batch = make_batch(samples_, idx);
  adam_->zero_grad();
  const PipelineOutput out = net_->forward(batch.image, batch.bboxes, batch.targets.cams, body_, Mode::train);
  const LossTerms terms = total_loss(out, batch.targets, config_.loss);
  if (!std::isfinite(terms.total.item())) {
    throw NumericError("training: non-finite loss at step " + std::to_string(step_ + 1));
  }
  terms.total.backward();
  StepResult r;
  r.grad_norm = global_grad_norm(adam_->params());
  if (!std::isfinite(r.grad_norm)) throw NumericError("training: non-finite gradient at step " + std::to_string(step_ + 1));
  clip_gradients(adam_->params(), config_.clip_norm);
  adam_->step();
  r.step = ++step_;
  r.loss = breakdown(terms);
  return r;
}

Container Trainer::checkpoint() const {
  Container c;
  net_->params().save_to(c, "param.");
  const auto names = net_->params().trainable_names();
  const auto& st = adam_->state();
  c.add(Record::f64("adam.step", {1}, std::vector<double>{static_cast<double>(st.step)}));
  for (std::size_t i = 0; i < st.m.size() && i < names.size(); ++i) {
    const auto n = static_cast<Index>(st.m[i].size());
    c.add(Record::f64("adam.m." + names[i], {n}, st.m[i]));
    c.add(Record::f64("adam.v." + names[i], {n}, st.v[i]));
  }
  c.add(Record::f64("train.step", {1}, std::vector<double>{static_cast<double>(step_)}));
  c.add(Record::f64("train.cursor", {3}, std::vector<double>{static_cast<double>(cursor_), static_cast<double>(epoch_),
                                                             static_cast<double>(order_.size())}));
  std::vector<double> order(order_.begin(), order_.end());
  c.add(Record::f64("train.order", {static_cast<Index>(order.size())}, order));
  const std::string text = config_.to_text();
  c.add(Record::u8("train.config", {static_cast<Index>(text.size())},
                   std::vector<std::uint8_t>(text.begin(), text.end())));
  return c;
}

void Trainer::restore(const Container& c) {
  net_->params().load_from(c, "param.");
  auto& st = adam_->state();
  const auto names = net_->params().trainable_names();
  st.step = static_cast<Index>(c.get("adam.step").as_f64().at(0));
  const auto params = adam_->params();
  st.m.assign(names.size(), {});
  st.v.assign(names.size(), {});
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!c.contains("adam.m." + names[i])) {
      if (st.step != 0) throw FormatError("checkpoint: missing optimiser state for " + names[i]);
      st.m[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
      st.v[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
      continue;
    }
    st.m[i] = c.get("adam.m." + names[i]).as_f64();
    st.v[i] = c.get("adam.v." + names[i]).as_f64();
    if (static_cast<Index>(st.m[i].size()) != params[i].numel() || st.v[i].size() != st.m[i].size()) {
      throw FormatError("checkpoint: optimiser state for " + names[i] + " has the wrong size");
    }
  }
  step_ = static_cast<Index>(c.get("train.step").as_f64().at(0));
  if (c.contains("train.order")) {
    const auto order = c.get("train.order").as_f64();
    order_.assign(order.begin(), order.end());
    const auto cur = c.get("train.cursor").as_f64();
    cursor_ = static_cast<std::size_t>(cur.at(0));
    epoch_ = static_cast<Index>(cur.at(1));
  }
}

RunConfig checkpoint_config(const Container& c) {
  if (!c.contains("train.config")) throw FormatError("checkpoint: no train.config record");
  const auto bytes = c.get("train.config").as_u8();
  return RunConfig::parse(std::string(bytes.begin(), bytes.end()));
}

std::unique_ptr<DPoseNet> load_network(const Container& c, const BodyTemplate& body) {
  auto net = std::make_unique<DPoseNet>(checkpoint_config(c).net, body.num_shape);
  net->params().load_from(c, "param.");
  return net;
}

std::vector<StepResult> run_training(Trainer& trainer, Index iterations, const std::filesystem::path& out_dir,
                                     std::ostream* csv, const std::function<void(const StepResult&)>& on_step) {
  const auto& cfg = trainer.config();
  std::vector<StepResult> history;
  if (csv && trainer.step() == 0) *csv << LossBreakdown::csv_header() << "\n";  // resumed runs append
  auto save = [&] {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    const auto tmp = out_dir / "checkpoint.dpt.tmp";
    trainer.checkpoint().save(tmp);
    std::filesystem::rename(tmp, out_dir / "checkpoint.dpt");
  };
  for (Index i = 0; i < iterations; ++i) {
    const StepResult r = trainer.train_step();
    history.push_back(r);
    if (csv && (r.step % cfg.log_every == 0 || r.step == 1)) *csv << r.loss.csv_row(r.step) << "\n" << std::flush;
    if (on_step) on_step(r);
    if (r.step % cfg.checkpoint_every == 0) save();
  }
  save();
  return history;
}

EvalReport evaluate(DPoseNet& net, const BodyTemplate& body, const std::vector<Sample>& samples,
                    std::span<const Index> indices, int batch_size) {
  EvalReport report;
  NoGradGuard ng;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), indices.size() - start);
    const auto idx = indices.subspan(start, count);
    const Batch b = make_batch(samples, idx);
    const auto out = net.forward(b.image, b.bboxes, b.targets.cams, body, Mode::eval);
    const auto K = out.joints3d.dim(1), N = out.vertices.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      const Sample& s = samples[static_cast<std::size_t>(idx[i])];
      const auto pj = out.joints3d.data().subspan(i * static_cast<std::size_t>(K * 3), static_cast<std::size_t>(K * 3));
      const auto pv = out.vertices.data().subspan(i * static_cast<std::size_t>(N * 3), static_cast<std::size_t>(N * 3));
      report.add(mve(pv, s.vertices, pj, s.joints3d), mpjpe(pj, s.joints3d), pa_mpjpe(pj, s.joints3d));
    }
  }
  return report;
}

}  // namespace dpose
