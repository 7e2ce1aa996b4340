// SPDX-License-Identifier: Apache-2.0
// dpose: dataset generation, training, evaluation, gradient checks and dumps.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dpose/config.hpp"
#include "dpose/error.hpp"
#include "dpose/image_io.hpp"
#include "dpose/parallel.hpp"
#include "dpose/selfcheck.hpp"
#include "dpose/train.hpp"

namespace fs = std::filesystem;
using namespace dpose;

namespace {

struct Common {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value run configuration file");
  app->add_option("--preset", c.preset, "desk or paper (ignored when --config is given)")
      ->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--seed", c.seed, "seed override");
  app->add_flag("--deterministic", c.deterministic, "single-threaded, bit-reproducible");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? preset_config(c.preset) : RunConfig::load(c.config_path);
  if (c.deterministic) cfg.deterministic = true;
  if (cfg.deterministic) set_num_threads(1);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::int64_t> split_indices(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.manifest.train;
  if (split == "val") return ds.manifest.val;
  std::vector<std::int64_t> all(ds.samples.size());
  std::iota(all.begin(), all.end(), std::int64_t{0});
  return all;
}

// Two grey maps side by side with a 1-pixel gutter.
std::vector<double> side_by_side(int h, int w, std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(static_cast<std::size_t>(h) * (2 * w + 1), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out[static_cast<std::size_t>(y) * (2 * w + 1) + x] = a[static_cast<std::size_t>(y) * w + x];
      out[static_cast<std::size_t>(y) * (2 * w + 1) + w + 1 + x] = b[static_cast<std::size_t>(y) * w + x];
    }
  return out;
}

int cmd_generate(const Common& common, std::optional<int> count, const std::string& out) {
  RunConfig cfg = resolve(common);
  DataConfig dc = cfg.data;
  if (count) dc.count = *count;
  if (common.seed) dc.seed = *common.seed;
  dc.validate();
  if (dc.count == 0) std::cerr << "warning: writing an empty dataset\n";
  const BodyTemplate body = build_template(dc.body);
  const auto samples = generate_dataset(body, dc);
  write_dataset(out, dc, samples);
  std::cout << "samples " << samples.size() << " config_hash " << hash_hex(dc.hash()) << "\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& dataset, const std::string& out,
              std::optional<std::int64_t> iterations, std::optional<double> lr, bool no_depth, bool resume) {
  RunConfig cfg = resolve(common);
  if (common.seed) cfg.seed = *common.seed;
  if (iterations) cfg.iterations = *iterations;
  if (lr) cfg.adam.lr = *lr;
  if (no_depth) cfg.net.use_depth = false;
  const Dataset ds = read_dataset(dataset);
  if (ds.manifest.input_size != cfg.net.input_size) {
    throw ConfigError("train: dataset images are " + std::to_string(ds.manifest.input_size) +
                      " px but the network expects " + std::to_string(cfg.net.input_size));
  }
  cfg.data.input_size = ds.manifest.input_size;
  cfg.data.body = ds.manifest.body;
  cfg.validate();
  const BodyTemplate body = build_template(ds.manifest.body);
  Trainer trainer(cfg, body, ds.samples, ds.manifest.train);
  fs::create_directories(out);
  const fs::path ckpt = fs::path(out) / "checkpoint.dpt";
  if (resume && fs::exists(ckpt)) trainer.restore(Container::load(ckpt));
  cfg.save(fs::path(out) / "config.txt");
  std::ofstream csv(fs::path(out) / "loss.csv", resume ? std::ios::app : std::ios::trunc);
  if (!csv) throw FormatError("train: cannot open " + (fs::path(out) / "loss.csv").string());
  const std::int64_t remaining = std::max<std::int64_t>(0, cfg.iterations - trainer.step());
  const auto history = run_training(trainer, remaining, out, &csv, [&](const StepResult& r) {
    if (r.step % cfg.log_every == 0 || r.step == 1)
      std::cout << "step " << r.step << " loss " << r.loss.total << " grad_norm " << r.grad_norm << "\n" << std::flush;
  });
  std::cout << "trained " << trainer.step() << " steps, checkpoint " << ckpt.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& split,
             const std::string& out) {
  const Container c = Container::load(checkpoint);
  const Dataset ds = read_dataset(dataset);
  const BodyTemplate body = build_template(ds.manifest.body);
  auto net = load_network(c, body);
  const auto idx = split_indices(ds, split);
  if (idx.empty()) throw ConfigError("eval: split '" + split + "' is empty");
  const EvalReport r = evaluate(*net, body, ds.samples, idx);
  std::cout << r.table();
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "eval.json", r.to_json());
    write_text(fs::path(out) / "eval.txt", r.table());
  }
  return 0;
}

int cmd_gradcheck(const Common& common, bool quick) {
  RunConfig cfg = resolve(common);
  GradCheckSuiteOptions opt;
  opt.pipeline = cfg.net;
  opt.include_pipeline = !quick;
  if (common.seed) opt.check.seed = *common.seed;
  bool ok = true;
  gradcheck_suite(opt, [&](const NamedGradCheck& r) {
    ok = ok && r.report.pass;
    std::printf("%s %-28s max_rel %.3e probes %lld excluded %lld\n", r.report.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.report.max_rel_err, static_cast<long long>(r.report.probes),
                static_cast<long long>(r.report.excluded));
    std::fflush(stdout);
  });
  if (!ok) throw NumericError("gradcheck: at least one check exceeded the tolerance");
  return 0;
}

int cmd_dump(const std::string& dataset, std::int64_t index, const std::string& checkpoint, const std::string& out) {
  const Dataset ds = read_dataset(dataset);
  if (index < 0 || index >= static_cast<std::int64_t>(ds.samples.size())) {
    throw ConfigError("dump: index " + std::to_string(index) + " outside [0, " + std::to_string(ds.samples.size()) + ")");
  }
  const Sample& s = ds.samples[static_cast<std::size_t>(index)];
  const int S = s.input_size, T = s.target_size();
  fs::create_directories(out);
  const fs::path base = fs::path(out) / ("sample_" + std::to_string(index));
  write_ppm(base.string() + "_image.ppm", planar_to_rgb(S, S, s.image));

  std::vector<double> depth = s.depth;
  std::vector<std::int32_t> parts = s.parts;
  if (!checkpoint.empty()) {
    const BodyTemplate body = build_template(ds.manifest.body);
    auto net = load_network(Container::load(checkpoint), body);
    NoGradGuard ng;
    const std::vector<std::int64_t> idx{index};
    const Batch b = make_batch(ds.samples, idx);
    const auto o = net->forward(b.image, b.bboxes, b.targets.cams, body, Mode::eval);
    if (o.depth.map.defined()) {
      const auto d = o.depth.map.data();
      depth.assign(d.begin(), d.end());
    } else {
      std::fill(depth.begin(), depth.end(), 0.0);
    }
    const auto logits = o.parts.map.data();
    const std::size_t P = static_cast<std::size_t>(T) * T;
    for (std::size_t p = 0; p < P; ++p) {
      int best = 0;
      for (int k = 1; k < 23; ++k)
        if (logits[k * P + p] > logits[best * P + p]) best = k;
      parts[p] = best;
    }
  }
  // Left: ground truth, right: prediction (or ground truth again without a checkpoint).
  write_pgm16(base.string() + "_depth.pgm", T, 2 * T + 1, side_by_side(T, T, s.depth, depth));
  write_ppm(base.string() + "_parts.ppm", hstack({labels_to_rgb(T, T, s.parts), labels_to_rgb(T, T, parts)}));
  std::cout << "wrote " << base.string() << "_{image.ppm,depth.pgm,parts.ppm}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpose: depth and part-segmentation guided body pose and shape regression"};
  app.require_subcommand(1);

  Common gen_c, train_c, grad_c;
  std::optional<int> count;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--count", count, "number of samples");
  gen->add_option("--out", gen_out, "dataset directory")->required();

  std::string train_ds, train_out;
  std::optional<std::int64_t> iters;
  std::optional<double> lr;
  bool no_depth = false, resume = false;
  auto* train = app.add_subcommand("train", "train on a dataset's training split");
  add_common(train, train_c);
  train->add_option("--dataset", train_ds, "dataset directory")->required();
  train->add_option("--out", train_out, "run directory (checkpoint, loss.csv, config.txt)")->required();
  train->add_option("--iterations", iters, "iteration budget override");
  train->add_option("--lr", lr, "learning rate override");
  train->add_flag("--no-depth", no_depth, "disable the depth branch");
  train->add_flag("--resume", resume, "continue from <out>/checkpoint.dpt");

  std::string ev_ckpt, ev_ds, ev_split = "all", ev_out;
  auto* ev = app.add_subcommand("eval", "MPJPE, PA-MPJPE and MVE of a checkpoint");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--dataset", ev_ds, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  ev->add_option("--out", ev_out, "directory for eval.json and eval.txt");

  bool quick = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every layer and the full loss");
  add_common(grad, grad_c);
  grad->add_flag("--quick", quick, "skip the full-pipeline check");

  std::string dump_ds, dump_ckpt, dump_out;
  std::int64_t dump_index = 0;
  auto* dump = app.add_subcommand("dump", "write image, depth and part maps of a sample");
  dump->add_option("--dataset", dump_ds, "dataset directory")->required();
  dump->add_option("--index", dump_index, "sample index");
  dump->add_option("--checkpoint", dump_ckpt, "also render the prediction of this checkpoint");
  dump->add_option("--out", dump_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) return cmd_generate(gen_c, count, gen_out);
    if (*train) return cmd_train(train_c, train_ds, train_out, iters, lr, no_depth, resume);
    if (*ev) return cmd_eval(ev_ckpt, ev_ds, ev_split, ev_out);
    if (*grad) return cmd_gradcheck(grad_c, quick);
    if (*dump) return cmd_dump(dump_ds, dump_index, dump_ckpt, dump_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
