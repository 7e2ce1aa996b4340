// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "dpose/container.hpp"
#include "dpose/error.hpp"
#include "dpose/gradcheck.hpp"
#include "dpose/ops.hpp"
#include "dpose/optim.hpp"
#include "test_util.hpp"

using namespace dpose;
using dpose::testing::random_tensor;

namespace {

// Direct cross-correlation, the textbook six-deep loop.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const auto HO = (H + 2 * pad - KH) / stride + 1, WO = (W + 2 * pad - KW) / stride + 1;
  std::vector<double> out;
  for (std::int64_t n = 0; n < B; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t y = 0; y < HO; ++y)
        for (std::int64_t xo = 0; xo < WO; ++xo) {
          double s = b.at({o});
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < KH; ++i)
              for (std::int64_t j = 0; j < KW; ++j) {
                const auto iy = y * stride - pad + i, ix = xo * stride - pad + j;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                s += x.at({n, c, iy, ix}) * w.at({o, c, i, j});
              }
          out.push_back(s);
        }
  return out;
}

std::vector<double> naive_contract(const Tensor& s, const Tensor& f) {
  const auto B = s.dim(0), P = s.dim(1), N = s.dim(2), C = f.dim(1);
  std::vector<double> out;
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t p = 0; p < P; ++p)
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < N; ++i) acc += s.at({b, p, i}) * f.at({b, c, i});
        out.push_back(acc);
      }
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d: all-ones kernel sums the 3x3 neighbourhood") {
  auto x = Tensor::full({1, 1, 3, 3}, 1.0);
  auto w = Tensor::full({1, 1, 3, 3}, 1.0);
  auto b = Tensor::zeros({1});
  auto y = conv2d(x, w, b, 1, 1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at({0, 0, 1, 1}) == 9.0);
  CHECK(y.at({0, 0, 0, 0}) == 4.0);
}

TEST_CASE("conv2d: identity 1x1 kernel") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 1, 4, 5}, rng);
  auto y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor::zeros({1}), 1, 0);
  CHECK(max_abs_diff(y.data(), x.data()) == 0.0);
}

TEST_CASE("conv2d matches the naive loop") {
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 3, 5, 5}, rng);
  auto w = random_tensor({4, 3, 3, 3}, rng);
  auto b = random_tensor({4}, rng);
  for (int stride : {1, 2}) {
    auto y = conv2d(x, w, b, stride, 1);
    CHECK(max_abs_diff(y.data(), naive_conv(x, w, b, stride, 1)) < 1e-12);
  }
  auto w1 = random_tensor({4, 3, 1, 1}, rng);
  CHECK(max_abs_diff(conv2d(x, w1, b, 1, 0).data(), naive_conv(x, w1, b, 1, 0)) < 1e-12);
}

TEST_CASE("conv2d rejects a channel mismatch and names the dim") {
  auto x = Tensor::zeros({1, 2, 4, 4});
  auto w = Tensor::zeros({3, 5, 3, 3});
  try {
    conv2d(x, w, Tensor::zeros({3}), 1, 1);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("dim 1") != std::string::npos);
  }
}

TEST_CASE("batchnorm2d") {
  auto gamma = Tensor::full({2}, 1.0);
  auto beta = Tensor::zeros({2});
  auto rm = Tensor::zeros({2});
  auto rv = Tensor::full({2}, 1.0);

  SUBCASE("constant input normalises to zero") {
    auto y = batchnorm2d(Tensor::full({2, 2, 3, 3}, 4.0), gamma, beta, rm, rv, Mode::train);
    for (double v : y.data()) CHECK(std::fabs(v) < 1e-12);
  }
  SUBCASE("zero scale leaves the shift") {
    std::mt19937_64 rng(3);
    auto y = batchnorm2d(random_tensor({2, 2, 3, 3}, rng), Tensor::zeros({2}), Tensor::full({2}, 5.0), rm, rv,
                         Mode::train);
    for (double v : y.data()) CHECK(v == 5.0);
  }
  SUBCASE("train mode output statistics") {
    std::mt19937_64 rng(4);
    auto x = scale(random_tensor({3, 2, 4, 4}, rng), 20.0);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, Mode::train);
    for (std::int64_t c = 0; c < 2; ++c) {
      double mx = 0, vx = 0, my = 0, vy = 0;
      const double n = 3 * 16;
      for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t i = 0; i < 16; ++i) {
          mx += x.at({b, c, i / 4, i % 4});
          my += y.at({b, c, i / 4, i % 4});
        }
      mx /= n;
      my /= n;
      for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t i = 0; i < 16; ++i) {
          vx += std::pow(x.at({b, c, i / 4, i % 4}) - mx, 2);
          vy += std::pow(y.at({b, c, i / 4, i % 4}) - my, 2);
        }
      vx /= n;
      vy /= n;
      CHECK(std::fabs(my) < 1e-6);
      CHECK(std::fabs(vy - 1.0) < 1e-6);
      CHECK(std::fabs(vy - vx / (vx + 1e-5)) < 1e-12);
      // running stats moved 10% of the way from their initial values
      CHECK(rm.at({c}) == doctest::Approx(0.1 * mx).epsilon(1e-12));
      CHECK(rv.at({c}) == doctest::Approx(0.9 + 0.1 * vx * n / (n - 1)).epsilon(1e-12));
    }
  }
  SUBCASE("single element per channel is rejected in train mode") {
    CHECK_THROWS_AS(batchnorm2d(Tensor::zeros({1, 2, 1, 1}), gamma, beta, rm, rv, Mode::train), NumericError);
    CHECK_NOTHROW(batchnorm2d(Tensor::zeros({1, 2, 1, 1}), gamma, beta, rm, rv, Mode::eval));
  }
}

TEST_CASE("relu and bilinear upsampling") {
  auto r = relu(Tensor::from_vector({3}, {-1.0, 0.0, 2.0}));
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0.0, 0.0, 2.0});

  auto c = upsample_bilinear2x(Tensor::full({1, 2, 3, 2}, 7.5));
  CHECK(c.shape() == Shape{1, 2, 6, 4});
  for (double v : c.data()) CHECK(v == 7.5);

  // A linear ramp v = 2*row + col is reproduced at half-pixel source
  // coordinates, clamped to [0, extent-1] at the borders.
  auto ramp = upsample_bilinear2x(Tensor::from_vector({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0}));
  auto src = [](int o) { return std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, 1.0); };
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(ramp.at({0, 0, y, x}) == doctest::Approx(2 * src(y) + src(x)).epsilon(1e-15));
}

TEST_CASE("spatial_softmax") {
  auto u = spatial_softmax(Tensor::zeros({1, 1, 56, 56}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3136.0).epsilon(1e-14));

  auto spike = Tensor::zeros({1, 1, 4, 4});
  spike.mutable_data()[5] = 1000.0;
  auto s = spatial_softmax(spike);
  CHECK(s.data()[5] == doctest::Approx(1.0));
  CHECK(s.data()[0] < 1e-300);

  std::mt19937_64 rng(5);
  auto x = scale(random_tensor({2, 4, 7, 7}, rng), 3.0);
  auto y = spatial_softmax(x);
  for (std::int64_t p = 0; p < 8; ++p) {
    double z = 0.0, total = 0.0;
    for (std::int64_t i = 0; i < 49; ++i) z += std::exp(x.data()[static_cast<std::size_t>(p * 49 + i)]);
    for (std::int64_t i = 0; i < 49; ++i) {
      const auto k = static_cast<std::size_t>(p * 49 + i);
      CHECK(y.data()[k] == doctest::Approx(std::exp(x.data()[k]) / z).epsilon(1e-12));
      total += y.data()[k];
    }
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("contract_attention") {
  std::mt19937_64 rng(6);
  auto f = random_tensor({1, 5, 12}, rng);
  SUBCASE("delta attention selects a column") {
    auto s = Tensor::zeros({1, 2, 12});
    s.mutable_data()[7] = 1.0;        // part 0 -> pixel 7
    s.mutable_data()[12 + 3] = 1.0;   // part 1 -> pixel 3
    auto a = contract_attention(s, f);
    for (std::int64_t c = 0; c < 5; ++c) {
      CHECK(a.at({0, 0, c}) == f.at({0, c, 7}));
      CHECK(a.at({0, 1, c}) == f.at({0, c, 3}));
    }
  }
  SUBCASE("uniform attention is mean pooling") {
    auto a = contract_attention(Tensor::full({1, 1, 12}, 1.0 / 12.0), f);
    for (std::int64_t c = 0; c < 5; ++c) {
      double m = 0.0;
      for (std::int64_t i = 0; i < 12; ++i) m += f.at({0, c, i});
      CHECK(a.at({0, 0, c}) == doctest::Approx(m / 12.0).epsilon(1e-13));
    }
  }
  SUBCASE("random shapes match the triple loop") {
    std::uniform_int_distribution<int> bd(1, 2), pd(1, 23), cd(1, 32), nd(1, 64);
    for (int trial = 0; trial < 30; ++trial) {
      const std::int64_t B = bd(rng), P = pd(rng), C = cd(rng), N = nd(rng);
      auto s = random_tensor({B, P, N}, rng);
      auto ff = random_tensor({B, C, N}, rng);
      CHECK(max_abs_diff(contract_attention(s, ff).data(), naive_contract(s, ff)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(contract_attention(Tensor::zeros({1, 2, 10}), f), ShapeError);
}

TEST_CASE("backward basics") {
  auto x = Tensor::from_vector({2}, {1.0, 2.0}, true);
  sum(x).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 1.0);

  x.zero_grad();
  sum(square(x)).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);

  // repeated calls accumulate
  sum(square(x)).backward();
  CHECK(x.grad()[1] == 8.0);

  CHECK_THROWS_AS(square(x).backward(), ShapeError);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(7);
  auto w = random_tensor({3, 4}, rng, true);
  auto v = random_tensor({4, 2}, rng);
  auto l1 = [&] { return sum(square(matmul(w, v))); };
  auto l2 = [&] { return mean(sigmoid(w)); };
  w.zero_grad();
  l1().backward();
  std::vector<double> g1(w.grad().begin(), w.grad().end());
  w.zero_grad();
  l2().backward();
  std::vector<double> g2(w.grad().begin(), w.grad().end());
  w.zero_grad();
  add(l1(), l2()).backward();
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::fabs(w.grad()[i] - (g1[i] + g2[i])) < 1e-12);
}

TEST_CASE("forward ops reject non-finite results") {
  CHECK_THROWS_AS(log(Tensor::zeros({2})), NumericError);
  CHECK_THROWS_AS(div(Tensor::full({1}, 1.0), Tensor::zeros({1})), NumericError);
}

TEST_CASE("broadcasting binary ops") {
  auto a = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = Tensor::from_vector({3}, {10, 20, 30}, true);
  auto c = add(a, b);
  CHECK(c.at({1, 2}) == 36.0);
  sum(c).backward();
  CHECK(b.grad()[0] == 2.0);
  auto col = Tensor::from_vector({2, 1}, {1, 2});
  CHECK(mul(a, col).at({1, 0}) == 8.0);
  CHECK_THROWS_AS(add(a, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("gradient clipping") {
  auto p = Tensor::zeros({2}, true);
  SUBCASE("norm 3 is halved") {
    auto g = p.mutable_grad();
    g[0] = 3.0 * 0.6;
    g[1] = 3.0 * 0.8;
    CHECK(clip_gradients({p}, 1.5) == doctest::Approx(0.5));
    CHECK(p.grad()[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(p.grad()[1] == doctest::Approx(1.2).epsilon(1e-15));
  }
  SUBCASE("norm 1 is untouched") {
    auto g = p.mutable_grad();
    g[0] = 0.6;
    g[1] = 0.8;
    CHECK(clip_gradients({p}, 1.5) == 1.0);
    CHECK(p.grad()[0] == 0.6);
  }
  SUBCASE("idempotent") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
      auto q = Tensor::zeros({17}, true);
      for (double& g : q.mutable_grad()) g = nd(rng);
      clip_gradients({q}, 1.5);
      std::vector<double> once(q.grad().begin(), q.grad().end());
      CHECK(clip_gradients({q}, 1.5) == 1.0);
      CHECK(std::vector<double>(q.grad().begin(), q.grad().end()) == once);
      CHECK(global_grad_norm({q}) <= 1.5 * (1 + 1e-12));
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("converges on a one-dimensional quadratic") {
    auto x = Tensor::from_vector({1}, {1.5}, true);
    Adam opt({x}, AdamConfig{.lr = 1e-2});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      sum(square(add_scalar(x, -1.0))).backward();
      opt.step();
    }
    CHECK(std::fabs(x.item() - 1.0) < 1e-3);
    CHECK(opt.state().step == 200);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    auto x = Tensor::from_vector({2}, {0.0, 0.0}, true);
    Adam opt({x}, AdamConfig{.lr = 0.1});
    auto g = x.mutable_grad();
    g[0] = 4.0;
    g[1] = -0.01;
    opt.step();
    CHECK(x.data()[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(x.data()[1] == doctest::Approx(0.1).epsilon(1e-4));
  }
  SUBCASE("missing gradient is an error") {
    Adam opt({Tensor::zeros({3}, true)}, AdamConfig{});
    CHECK_THROWS_AS(opt.step(), NumericError);
  }
  SUBCASE("weight decay is fixed at zero") {
    CHECK_THROWS_AS(Adam({Tensor::zeros({1}, true)}, AdamConfig{.weight_decay = 0.01}), ConfigError);
  }
}

TEST_CASE("finite-difference checker") {
  SUBCASE("relu away from the kink") {
    auto x = Tensor::from_vector({4}, {-1.0, -0.3, 0.4, 2.0}, true);
    auto r = finite_diff_check([&] { return sum(mul(relu(x), x)); }, {x}, {.tolerance = 1e-6});
    CHECK(r.pass);
    CHECK(r.excluded == 0);
  }
  SUBCASE("relu at zero is excluded, not failed") {
    auto x = Tensor::from_vector({3}, {0.0, 1.0, -1.0}, true);
    auto r = finite_diff_check([&] { return sum(relu(x)); }, {x});
    CHECK(r.excluded == 1);
    CHECK(r.pass);
  }
  SUBCASE("conv + batchnorm + relu stack") {
    std::mt19937_64 rng(9);
    auto x = random_tensor({2, 2, 5, 5}, rng, true);
    auto w = random_tensor({3, 2, 3, 3}, rng, true);
    auto b = random_tensor({3}, rng, true);
    auto gamma = random_tensor({3}, rng, true);
    auto beta = random_tensor({3}, rng, true);
    auto rm = Tensor::zeros({3});
    auto rv = Tensor::full({3}, 1.0);
    auto target = random_tensor({2, 3, 5, 5}, rng);
    auto fn = [&] {
      auto y = relu(batchnorm2d(conv2d(x, w, b, 1, 1), gamma, beta, rm, rv, Mode::train));
      return sum(mul(y, target));
    };
    auto r = finite_diff_check(fn, {x, w, b, gamma, beta});
    CHECK(r.pass);
    CHECK(r.max_rel_err < 1e-4);
  }
  SUBCASE("a wrong gradient is caught") {
    auto x = Tensor::from_vector({2}, {0.5, 1.5}, true);
    // scale(x, 2) reports derivative 2; pairing it with a detached copy breaks the chain.
    auto r = finite_diff_check([&] { return add(sum(scale(x, 2.0)), sum(square(x.detach()))); }, {x});
    CHECK_FALSE(r.pass);
  }
}

TEST_CASE("every primitive passes the gradient check") {
  std::mt19937_64 rng(10);
  auto a = random_tensor({2, 3, 4, 4}, rng, true);
  auto pos = add_scalar(abs(random_tensor({2, 3, 4, 4}, rng)), 0.5).detach();
  pos.set_requires_grad(true);
  auto row = random_tensor({4}, rng, true);
  auto target = random_tensor({2, 3, 4, 4}, rng);
  auto dot = [&](const Tensor& t) { return sum(mul(t, target)); };
  GradCheckOptions opt;

  struct Case {
    const char* name;
    std::function<Tensor()> fn;
    std::vector<Tensor> inputs;
  };
  auto m1 = random_tensor({3, 5}, rng, true);
  auto m2 = random_tensor({5, 2}, rng, true);
  auto ml_x = random_tensor({2, 4, 3}, rng, true);
  auto ml_w = random_tensor({4, 3, 6}, rng, true);
  auto ml_b = random_tensor({4, 6}, rng, true);
  auto att = random_tensor({2, 3, 16}, rng, true);
  auto feat = random_tensor({2, 5, 16}, rng, true);
  auto logits = random_tensor({2, 5, 3, 3}, rng, true);
  std::vector<std::int32_t> labels(18);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i % 5);
  std::vector<double> mat(6 * 4);
  std::normal_distribution<double> nd;
  for (double& v : mat) v = nd(rng);
  auto pts = random_tensor({2, 4, 3}, rng, true);
  std::vector<std::uint8_t> mask(2 * 3 * 4 * 4);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3) != 0;
  auto w = random_tensor({4, 3, 3, 3}, rng, true);
  auto wb = random_tensor({4}, rng, true);
  auto rm = Tensor::zeros({3});
  auto rv = Tensor::full({3}, 1.3);
  auto gamma = random_tensor({3}, rng, true);
  auto beta = random_tensor({3}, rng, true);

  std::vector<Case> cases = {
      {"add/sub broadcast", [&] { return dot(sub(add(a, row), row)); }, {a, row}},
      {"mul broadcast", [&] { return dot(mul(a, row)); }, {a, row}},
      {"div", [&] { return dot(div(a, pos)); }, {a, pos}},
      {"exp/log/sqrt", [&] { return dot(add(exp(scale(a, 0.3)), mul(log(pos), sqrt(pos)))); }, {a, pos}},
      {"sigmoid/abs", [&] { return dot(add(sigmoid(a), abs(pos))); }, {a, pos}},
      {"mean/masked_mean", [&] { return add(mean(square(a)), masked_mean(mul(a, a), mask)); }, {a}},
      {"concat/slice/reshape",
       [&] {
         auto c = concat({a, scale(a, 2.0)}, 1);
         return dot(reshape(slice(c, 1, 2, 5), {2, 3, 4, 4}));
       },
       {a}},
      {"matmul", [&] { return sum(square(matmul(m1, m2))); }, {m1, m2}},
      {"apply_matrix", [&] { return sum(square(apply_matrix(mat, 6, 4, pts))); }, {pts}},
      {"conv2d stride 2", [&] { return sum(square(conv2d(a, w, wb, 2, 1))); }, {a, w, wb}},
      {"batchnorm eval", [&] { return dot(batchnorm2d(a, gamma, beta, rm, rv, Mode::eval)); }, {a, gamma, beta}},
      {"upsample", [&] { return sum(mul(upsample_bilinear2x(a), upsample_bilinear2x(target))); }, {a}},
      {"spatial_softmax", [&] { return dot(spatial_softmax(a)); }, {a}},
      {"contract_attention", [&] { return sum(square(contract_attention(att, feat))); }, {att, feat}},
      {"cross_entropy_2d", [&] { return cross_entropy_2d(logits, labels); }, {logits}},
      {"multilinear", [&] { return sum(square(multilinear(ml_x, ml_w, ml_b))); }, {ml_x, ml_w, ml_b}},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    auto r = finite_diff_check(c.fn, c.inputs, opt);
    CHECK(r.pass);
    CHECK(r.excluded == 0);
  }
}

TEST_CASE("DPT1 container") {
  std::mt19937_64 rng(11);
  Container c;
  auto t = random_tensor({3, 2, 2}, rng);
  c.add_tensor("encoder.stem.weight", t);
  const std::vector<std::int32_t> labels{0, 5, 22, -1};
  c.add(Record::i32("labels", {2, 2}, labels));
  const std::vector<std::uint8_t> flags{1, 0};
  c.add(Record::u8("flags", {2}, flags));
  c.add_tensor("scalar", Tensor::scalar(-0.0));

  const auto bytes = c.serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DPT1");
  auto back = Container::parse(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.tensor("encoder.stem.weight").shape() == t.shape());
  CHECK(std::memcmp(back.tensor("encoder.stem.weight").data().data(), t.data().data(), 12 * sizeof(double)) == 0);
  CHECK(back.get("labels").as_i32() == labels);
  CHECK(back.get("flags").as_u8() == flags);
  CHECK(std::signbit(back.tensor("scalar").item()));

  SUBCASE("file round trip") {
    auto path = std::filesystem::temp_directory_path() / "dpose_container_test.dpt";
    c.save(path);
    CHECK(Container::load(path).serialize() == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("corruption is a structured error") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(Container::parse(bad), FormatError);
    auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_AS(Container::parse(cut), FormatError);
    for (std::size_t at : {std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
      auto flipped = bytes;
      flipped[at] ^= 0x10;
      CHECK_THROWS_AS(Container::parse(flipped), FormatError);
    }
    CHECK_THROWS_AS(back.get("missing"), FormatError);
    CHECK_THROWS_AS(back.get("labels").as_f64(), FormatError);
  }
}
