// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dpose/config.hpp"
#include "dpose/error.hpp"
#include "dpose/train.hpp"

using namespace dpose;

namespace {

const BodyTemplate& body() {
  static const BodyTemplate b = build_template();
  return b;
}

RunConfig tiny_config() {
  RunConfig c = preset_config("desk");
  c.net.input_size = 32;
  c.net.channels = {32, 16, 8, 4};
  c.net.residual_blocks = 1;
  c.net.head_hidden = 16;
  c.data.input_size = 32;
  c.data.count = 4;
  c.data.seed = 3;
  c.batch_size = 3;
  c.log_every = 1;
  return c;
}

const std::vector<Sample>& tiny_samples() {
  static const std::vector<Sample> s = generate_dataset(body(), tiny_config().data);
  return s;
}

bool same_loss(const LossBreakdown& a, const LossBreakdown& b) {
  return a.depth == b.depth && a.segm == b.segm && a.pose == b.pose && a.shape == b.shape && a.j3d == b.j3d &&
         a.j2d == b.j2d && a.v3d == b.v3d && a.total == b.total;
}

}  // namespace

TEST_CASE("run config text format") {
  for (const char* name : {"desk", "paper"}) {
    const RunConfig c = preset_config(name);
    const std::string text = c.to_text();
    CHECK(RunConfig::parse(text).to_text() == text);
  }
  const RunConfig paper = preset_config("paper");
  CHECK(paper.adam.lr == 1e-5);
  CHECK(paper.batch_size == 64);
  CHECK(paper.iterations == 200000);
  CHECK(paper.clip_norm == 1.5);
  CHECK(paper.adam.beta1 == 0.9);
  CHECK(paper.adam.beta2 == 0.999);
  CHECK(paper.net.input_size == 224);
  CHECK(paper.loss.pose == 10.0);
  const RunConfig desk = preset_config("desk");
  CHECK(desk.batch_size == 8);
  CHECK(desk.adam.lr == 1e-4);
  CHECK(desk.net.input_size == 64);

  RunConfig odd = desk;
  odd.adam.lr = 0.1 + 0.2;
  odd.data.noise_std = 1.0 / 3.0;
  odd.net.use_depth = false;
  CHECK(RunConfig::parse(odd.to_text()).to_text() == odd.to_text());
  CHECK(RunConfig::parse(odd.to_text()).adam.lr == odd.adam.lr);

  CHECK(RunConfig::parse("preset=desk\n# comment\n train.batch_size = 4 \n").batch_size == 4);
  CHECK_THROWS_AS(RunConfig::parse("preset=desk\nfoo=1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("preset=desk\ntrain.batch_size=x\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("preset=desk\nadam.weight_decay=0.01\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("preset=desk\nnet.input_size=96\n"), ConfigError);
  CHECK_THROWS_AS(preset_config("huge"), ConfigError);
}

TEST_CASE("batches") {
  const auto& s = tiny_samples();
  const std::vector<std::int64_t> idx{2, 0};
  const Batch b = make_batch(s, idx);
  CHECK(b.image.shape() == Shape{2, 3, 32, 32});
  CHECK(b.targets.depth.shape() == Shape{2, 1, 8, 8});
  CHECK(b.targets.parts.size() == 128);
  CHECK(b.targets.vertices.shape() == Shape{2, body().num_verts, 3});
  CHECK(b.image.at({0, 1, 5, 7}) == s[2].image[32 * 32 + 5 * 32 + 7]);
  CHECK(b.bboxes[1].cx == s[0].bbox.cx);
}

TEST_CASE("ground truth wiring gives zero error") {
  const auto& s = tiny_samples();
  NoGradGuard ng;
  for (const Sample& x : s) {
    const auto out = body_forward(body(), Tensor::from_vector({1, 22, 3, 3}, x.rotations),
                                  Tensor::from_vector({1, 11}, x.params.betas), Tensor::zeros({1, 3}));
    const auto j = out.joints.data(), v = out.vertices.data();
    CHECK(mpjpe(j, x.joints3d) == 0.0);
    CHECK(pa_mpjpe(j, x.joints3d) < 1e-6);
    CHECK(mve(v, x.vertices, j, x.joints3d) == 0.0);
  }
}

TEST_CASE("training is reproducible") {
  const auto& s = tiny_samples();
  auto run = [&](int steps) {
    Trainer t(tiny_config(), body(), s);
    std::vector<LossBreakdown> out;
    for (int i = 0; i < steps; ++i) out.push_back(t.train_step().loss);
    return out;
  };
  const auto a = run(4), b = run(4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_loss(a[i], b[i]));
  CHECK(a.back().total < a.front().total);

  SUBCASE("csv output") {
    std::ostringstream c1, c2;
    Trainer t1(tiny_config(), body(), s), t2(tiny_config(), body(), s);
    run_training(t1, 3, {}, &c1);
    run_training(t2, 3, {}, &c2);
    CHECK(c1.str() == c2.str());
    CHECK(c1.str().rfind(LossBreakdown::csv_header() + "\n1,", 0) == 0);
  }
}

TEST_CASE("zero learning rate leaves the loss unchanged") {
  RunConfig c = tiny_config();
  c.adam.lr = 0.0;
  c.batch_size = 4;  // the whole set each step
  Trainer t(c, body(), tiny_samples());
  const double first = t.train_step().loss.total;
  for (int i = 0; i < 3; ++i) CHECK(t.train_step().loss.total == doctest::Approx(first).epsilon(1e-12));
}

TEST_CASE("checkpoint resume matches an uninterrupted run") {
  const auto& s = tiny_samples();
  Trainer straight(tiny_config(), body(), s);
  std::vector<LossBreakdown> expect;
  for (int i = 0; i < 5; ++i) expect.push_back(straight.train_step().loss);

  Trainer first(tiny_config(), body(), s);
  for (int i = 0; i < 2; ++i) first.train_step();
  const auto dir = std::filesystem::temp_directory_path() / "dpose_test_ckpt";
  std::filesystem::create_directories(dir);
  first.checkpoint().save(dir / "c.dpt");
  const auto bytes = read_file_bytes(dir / "c.dpt");
  CHECK(Container::parse(bytes).serialize() == bytes);

  Trainer resumed(tiny_config(), body(), s);
  resumed.restore(Container::load(dir / "c.dpt"));
  CHECK(resumed.step() == 2);
  for (int i = 2; i < 5; ++i) CHECK(same_loss(resumed.train_step().loss, expect[static_cast<std::size_t>(i)]));

  auto corrupt = bytes;
  corrupt[1] = 'Q';
  write_file_bytes(dir / "bad.dpt", corrupt);
  CHECK_THROWS_AS(Container::load(dir / "bad.dpt"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation") {
  Trainer t(tiny_config(), body(), tiny_samples());
  const std::vector<std::int64_t> idx{0, 1, 2, 3};
  const auto r = evaluate(t.net(), body(), tiny_samples(), idx, 3);
  CHECK(r.count() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.pa_mpjpe[i] <= r.mpjpe[i] + 1e-9);
    CHECK(r.mve[i] > 0);
  }
}
