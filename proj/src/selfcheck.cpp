// SPDX-License-Identifier: Apache-2.0
#include "dpose/selfcheck.hpp"

#include <numeric>
#include <random>

#include "dpose/body.hpp"
#include "dpose/camproj.hpp"
#include "dpose/data.hpp"
#include "dpose/loss.hpp"
#include "dpose/ops.hpp"
#include "dpose/train.hpp"

namespace dpose {

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, bool grad = true, double scale_by = 1.0) {
  std::normal_distribution<double> nd(0.0, scale_by);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = nd(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), grad);
}

struct Case {
  std::string name;
  std::function<Tensor()> fn;
  std::vector<Tensor> inputs;
  std::int64_t probes = 0;
};

}  // namespace

std::vector<NamedGradCheck> gradcheck_suite(const GradCheckSuiteOptions& options,
                                            const std::function<void(const NamedGradCheck&)>& progress) {
  std::mt19937_64 rng(options.check.seed + 17);
  std::vector<NamedGradCheck> out;
  auto run = [&](Case c) {
    GradCheckOptions o = options.check;
    if (c.probes > 0) o.max_probes_per_input = c.probes;
    NamedGradCheck r{c.name, finite_diff_check(c.fn, c.inputs, o)};
    if (progress) progress(r);
    out.push_back(std::move(r));
  };

  // Layer primitives.
  auto a = randn({2, 3, 4, 4}, rng);
  auto pos = Tensor::from_vector({2, 3, 4, 4}, std::vector<double>(96), true);
  {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (double& v : pos.mutable_data()) v = u(rng);
  }
  auto row = randn({4}, rng);
  auto target = randn({2, 3, 4, 4}, rng, false);
  auto dot = [target](const Tensor& t) { return sum(mul(t, target)); };
  auto w = randn({4, 3, 3, 3}, rng), wb = randn({4}, rng);
  auto gamma = randn({3}, rng), beta = randn({3}, rng);
  auto rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.3);
  auto m1 = randn({3, 5}, rng), m2 = randn({5, 2}, rng), wl = randn({2, 4}, rng);
  auto ml_x = randn({2, 4, 3}, rng), ml_w = randn({4, 3, 6}, rng), ml_b = randn({4, 6}, rng);
  auto att = randn({2, 3, 16}, rng), feat = randn({2, 5, 16}, rng);
  auto logits = randn({2, 5, 3, 3}, rng);
  std::vector<std::int32_t> labels(18);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>((i * 7) % 5);
  std::vector<std::uint8_t> mask(96);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3) != 0;

  std::vector<Case> cases = {
      {"elementwise add/sub/mul/div", [=] { return dot(div(mul(sub(add(a, row), row), row), pos)); }, {a, row, pos}},
      {"exp/log/sqrt/sigmoid/abs",
       [=] { return dot(add(add(exp(scale(a, 0.3)), mul(log(pos), sqrt(pos))), add(sigmoid(a), abs(pos)))); },
       {a, pos}},
      {"relu", [=] { return dot(relu(a)); }, {a}},
      {"reductions", [=] { return add(mean(square(a)), masked_mean(mul(a, a), mask)); }, {a}},
      {"concat/slice/reshape",
       [=] { return dot(reshape(slice(concat({a, scale(a, 2.0)}, 1), 1, 2, 5), {2, 3, 4, 4})); },
       {a}},
      {"matmul/linear", [=] { return sum(square(linear(matmul(m1, m2), wl, row))); }, {m1, m2, wl, row}},
      {"conv2d", [=] { return sum(square(conv2d(a, w, wb, 2, 1))); }, {a, w, wb}},
      {"batchnorm train",
       [=]() mutable { return dot(batchnorm2d(a, gamma, beta, rm, rv, Mode::train)); },
       {a, gamma, beta}},
      {"batchnorm eval", [=]() mutable { return dot(batchnorm2d(a, gamma, beta, rm, rv, Mode::eval)); }, {a, gamma, beta}},
      {"bilinear upsample", [=] { return sum(mul(upsample_bilinear2x(a), upsample_bilinear2x(target))); }, {a}},
      {"spatial softmax", [=] { return dot(spatial_softmax(a)); }, {a}},
      {"attention contraction", [=] { return sum(square(contract_attention(att, feat))); }, {att, feat}},
      {"cross entropy", [=] { return cross_entropy_2d(logits, labels); }, {logits}},
      {"multilinear", [=] { return sum(square(multilinear(ml_x, ml_w, ml_b))); }, {ml_x, ml_w, ml_b}},
  };

  // Attention pooling with depth features.
  {
    auto pl = randn({2, 23, 4, 4}, rng), fu = randn({2, 6, 4, 4}, rng), dp = randn({2, 2, 4, 4}, rng);
    auto wt = randn({2, 22, 8}, rng, false);
    cases.push_back({"attend", [=] { return sum(mul(attend(pl, fu, dp), wt)); }, {pl, fu, dp}, 40});
  }

  // Body model through the 6D rotation map.
  {
    const BodyTemplate body = build_template({.verts_per_bone = 8});
    auto r6 = randn({2, 22, 6}, rng);
    auto betas = randn({2, body.num_shape}, rng, true, 0.5);
    auto tr = randn({2, 3}, rng);
    auto wv = randn({2, body.num_verts, 3}, rng, false);
    cases.push_back({"body forward",
                     [=] {
                       auto o = body_forward(body, rot6d_to_matrix(r6), betas, tr);
                       return add(sum(mul(o.vertices, wv)), sum(square(o.joints)));
                     },
                     {r6, betas, tr},
                     40});
  }

  // Camera: crop camera to full-frame translation, then projection.
  {
    const std::vector<PerspectiveCamera> cams{{500.0, 320.0, 240.0, 640, 480}, {300.0, 100.0, 90.0, 200, 180}};
    const std::vector<BBox> boxes{{350.0, 200.0, 120.0}, {80.0, 95.0, 60.0}};
    auto pts = randn({2, 5, 3}, rng, true, 0.3);
    auto crop = Tensor::from_vector({2, 3}, {0.9, 0.05, -0.1, 1.2, -0.2, 0.1}, true);
    auto wt = randn({2, 5, 2}, rng, false);
    cases.push_back({"camera projection",
                     [=] {
                       auto full = add(pts, reshape(crop_to_full_translation(crop, boxes, cams), {2, 1, 3}));
                       return sum(mul(project(full, cams), wt));
                     },
                     {pts, crop}});
  }

  // Masked SSIM depth loss on a partly supervised batch.
  {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<double> g(2 * 10 * 10, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto y = (i / 10) % 10, x = i % 10;
      if (y >= 2 && y < 8 && x >= 3 && x < 9) g[i] = u(rng);
    }
    const Tensor gt = Tensor::from_vector({2, 1, 10, 10}, g);
    Tensor pred = Tensor::from_vector({2, 1, 10, 10}, std::vector<double>(200), true);
    for (double& v : pred.mutable_data()) v = u(rng);
    const std::vector<std::uint8_t> both{1, 1};
    cases.push_back({"masked SSIM", [=] { return masked_ssim(pred, gt, both); }, {pred}});
  }

  for (auto& c : cases) run(std::move(c));

  if (!options.include_pipeline) return out;

  // The full training loss.
  NetConfig nc = options.pipeline;
  nc.input_size = 32;
  DataConfig dc;
  dc.input_size = 32;
  dc.count = options.pipeline_batch;
  dc.seed = 5;
  const BodyTemplate body = build_template(dc.body);
  const auto samples = generate_dataset(body, dc);
  std::vector<std::int64_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  const Batch batch = make_batch(samples, idx);
  auto net = std::make_shared<DPoseNet>(nc, body.num_shape);
  std::vector<Tensor> inputs{batch.image.detach()};
  inputs[0].set_requires_grad(true);
  for (const auto& p : net->params().trainable()) inputs.push_back(p);
  const Tensor image = inputs[0];
  run({"full pipeline loss",
       [net, image, batch, &body] {
         const auto o = net->forward(image, batch.bboxes, batch.targets.cams, body, Mode::train);
         return total_loss(o, batch.targets).total;
       },
       inputs, options.probes_per_parameter});
  return out;
}

}  // namespace dpose
