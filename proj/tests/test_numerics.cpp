#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rldn/adamw.hpp"
#include "rldn/errors.hpp"
#include "rldn/ops.hpp"
#include "support.hpp"

using namespace rldn;
using test::check_gradients;
using test::random_tensor;

namespace {

constexpr int kTrials = 20;
constexpr double kTol = 1e-4;

void expect_gradients(const test::GraphFn& f, const std::vector<Tensor>& inputs, Rng& rng) {
  const test::GradCheck g = check_gradients(f, inputs, rng);
  CHECK(g.rel_error < kTol);
}

double inner(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(1);
  for (int t = 0; t < kTrials; ++t) {
    const Shape s = {1 + rng.below(4), 1 + rng.below(5)};
    Tensor a = random_tensor(rng, s), b = random_tensor(rng, s);
    expect_gradients([](auto& x) { return ops::add(x[0], x[1]); }, {a, b}, rng);
    expect_gradients([](auto& x) { return ops::sub(x[0], x[1]); }, {a, b}, rng);
    expect_gradients([](auto& x) { return ops::mul(x[0], x[1]); }, {a, b}, rng);
    expect_gradients([](auto& x) { return ops::scale(x[0], -1.7); }, {a}, rng);
    expect_gradients([](auto& x) { return ops::add_scalar(x[0], 0.3); }, {a}, rng);
    expect_gradients([](auto& x) { return ops::exp(x[0]); }, {a}, rng);
    expect_gradients([](auto& x) { return ops::square(x[0]); }, {a}, rng);
    Tensor pos = random_tensor(rng, s, 0.2, 2.0);
    expect_gradients([](auto& x) { return ops::log(x[0]); }, {pos}, rng);
    Tensor kinked = test::away_from_zero(rng, s);
    expect_gradients([](auto& x) { return ops::relu(x[0]); }, {kinked}, rng);
    // Keep clamp inputs off the bounds and minimum inputs off the diagonal.
    Tensor c = random_tensor(rng, s, -0.5, 0.5);
    for (double& v : c.mutable_data()) {
      if (std::abs(std::abs(v) - 0.25) < 1e-2) v *= 0.9;
    }
    expect_gradients([](auto& x) { return ops::clamp(x[0], -0.25, 0.25); }, {c}, rng);
    Tensor d = test::away_from_zero(rng, s);
    Tensor e = ops::add(a.detach(), d).detach().set_requires_grad(true);
    expect_gradients([](auto& x) { return ops::minimum(x[0], x[1]); }, {a, e}, rng);
  }
}

TEST_CASE("reductions, reshape and gather match finite differences") {
  Rng rng(2);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 1 + rng.below(5), m = 1 + rng.below(6);
    Tensor a = random_tensor(rng, {n, m});
    expect_gradients([](auto& x) { return ops::sum(x[0]); }, {a}, rng);
    expect_gradients([](auto& x) { return ops::mean(x[0]); }, {a}, rng);
    expect_gradients([](auto& x) { return ops::sum_rows(x[0]); }, {a}, rng);
    expect_gradients([n, m](auto& x) { return ops::reshape(x[0], {m, n}); }, {a}, rng);
    std::vector<int> idx(n);
    for (int& i : idx) i = static_cast<int>(rng.below(m));
    expect_gradients([idx](auto& x) { return ops::gather_rows(x[0], idx); }, {a}, rng);
    Tensor b = random_tensor(rng, {n, m});
    expect_gradients([](auto& x) { return ops::mse_loss(x[0], x[1]); }, {a, b}, rng);
  }
}

TEST_CASE("linear, softmax and log_softmax match finite differences") {
  Rng rng(3);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 1 + rng.below(4), in = 1 + rng.below(6), out = 1 + rng.below(5);
    Tensor x = random_tensor(rng, {n, in}), w = random_tensor(rng, {out, in}), b = random_tensor(rng, {out});
    expect_gradients([](auto& v) { return ops::linear(v[0], v[1], v[2]); }, {x, w, b}, rng);
    Tensor x1 = random_tensor(rng, {in});
    expect_gradients([](auto& v) { return ops::linear(v[0], v[1], v[2]); }, {x1, w, b}, rng);
    Tensor logits = random_tensor(rng, {n, out}, -3.0, 3.0);
    expect_gradients([](auto& v) { return ops::softmax(v[0]); }, {logits}, rng);
    expect_gradients([](auto& v) { return ops::log_softmax(v[0]); }, {logits}, rng);
    Tensor flat = random_tensor(rng, {out + 1}, -3.0, 3.0);
    expect_gradients([](auto& v) { return ops::softmax(v[0]); }, {flat}, rng);
  }
}

TEST_CASE("conv2d and conv_transpose2d match finite differences") {
  Rng rng(4);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t cin = 1 + rng.below(2), cout = 1 + rng.below(3), h = 3 + rng.below(4), w = 3 + rng.below(4);
    const int stride = 1 + static_cast<int>(rng.below(2));
    Tensor x = random_tensor(rng, {cin, h, w});
    Tensor k = random_tensor(rng, {cout, cin, 3, 3});
    Tensor b = random_tensor(rng, {cout});
    expect_gradients([stride](auto& v) { return ops::conv2d(v[0], v[1], v[2], stride, 1); }, {x, k, b}, rng);
    Tensor kt = random_tensor(rng, {cin, cout, 3, 3});
    const int op = stride == 2 ? 1 : 0;
    expect_gradients([stride, op](auto& v) { return ops::conv_transpose2d(v[0], v[1], v[2], stride, 1, op); },
                     {x, kt, b}, rng);
  }
}

TEST_CASE("conv2d weight gradient on a 2x8x8 input with 4 output channels") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {2, 8, 8}), k = random_tensor(rng, {4, 2, 3, 3}), b = random_tensor(rng, {4});
  const auto g = check_gradients([](auto& v) { return ops::sum(ops::conv2d(v[0], v[1], v[2], 1, 1)); }, {x, k, b}, rng);
  CHECK(g.rel_error < kTol);
}

TEST_CASE("batchnorm2d matches finite differences in train and eval mode") {
  Rng rng(6);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t c = 1 + rng.below(3), h = 2 + rng.below(3), w = 2 + rng.below(3);
    Tensor x = random_tensor(rng, {c, h, w}), g = random_tensor(rng, {c}, 0.5, 2.0), be = random_tensor(rng, {c});
    auto stats = ops::BatchNormStats::fresh(c);
    expect_gradients([&stats](auto& v) { return ops::batchnorm2d(v[0], v[1], v[2], stats, ops::NormMode::kTrain); },
                     {x, g, be}, rng);
    expect_gradients([&stats](auto& v) { return ops::batchnorm2d(v[0], v[1], v[2], stats, ops::NormMode::kEval); },
                     {x, g, be}, rng);
  }
}

TEST_CASE("composite conv -> batchnorm -> relu -> mse graph") {
  Rng rng(7);
  for (int t = 0; t < kTrials; ++t) {
    Tensor x = random_tensor(rng, {2, 6, 6}), k = random_tensor(rng, {3, 2, 3, 3}), b = random_tensor(rng, {3});
    Tensor g = random_tensor(rng, {3}, 0.5, 2.0), be = random_tensor(rng, {3}, 0.1, 0.5);
    Tensor target = random_tensor(rng, {3, 6, 6}, 0.0, 1.0, false);
    auto stats = ops::BatchNormStats::fresh(3);
    auto f = [&](auto& v) {
      Tensor y = ops::conv2d(v[0], v[1], v[2], 1, 1);
      y = ops::relu(ops::batchnorm2d(y, v[3], v[4], stats, ops::NormMode::kTrain));
      return ops::mse_loss(y, target);
    };
    expect_gradients(f, {x, k, b, g, be}, rng);
  }
}

TEST_CASE("conv2d examples") {
  SUBCASE("box filter on a constant image") {
    Tensor x = Tensor::full({1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
    Tensor y = ops::conv2d(x, k, Tensor::zeros({1}), 1, 1);
    CHECK(y.shape() == Shape{1, 3, 3});
    CHECK(y[4] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("1x1 identity kernel") {
    Rng rng(8);
    Tensor x = random_tensor(rng, {1, 5, 4}, -1, 1, false);
    Tensor y = ops::conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor::zeros({1}), 1, 0);
    CHECK(y.values() == x.values());
  }
  SUBCASE("errors") {
    Tensor x = Tensor::zeros({1, 4, 4});
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1}), 1, 1), DimensionError);
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 0, 1), ArgumentError);
    CHECK_THROWS_AS(ops::conv_transpose2d(x, Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 2, 1, 2),
                    ArgumentError);
  }
}

TEST_CASE("conv_transpose2d doubles the extent and is the adjoint of conv2d") {
  Tensor up = ops::conv_transpose2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 2, 1, 1);
  CHECK(up.shape() == Shape{1, 8, 8});

  Rng rng(9);
  for (int t = 0; t < kTrials; ++t) {
    const int stride = 1 + static_cast<int>(rng.below(2));
    const std::size_t cin = 1 + rng.below(3), cout = 1 + rng.below(3);
    Tensor k = random_tensor(rng, {cout, cin, 3, 3}, -1, 1, false);
    Tensor x = random_tensor(rng, {cin, 8, 8}, -1, 1, false);
    Tensor cx = ops::conv2d(x, k, Tensor::zeros({cout}), stride, 1);
    Tensor y = random_tensor(rng, cx.shape(), -1, 1, false);
    // conv2d weight [O, I, k, k] is already the transposed layout [C_in=O, C_out=I].
    Tensor ty = ops::conv_transpose2d(y, k, Tensor::zeros({cin}), stride, 1, stride - 1);
    REQUIRE(ty.shape() == x.shape());
    CHECK(std::abs(inner(cx, y) - inner(x, ty)) < 1e-10);
  }
}

TEST_CASE("batchnorm2d examples") {
  Rng rng(10);
  Tensor x = random_tensor(rng, {3, 6, 5}, -2, 5, false);
  auto stats = ops::BatchNormStats::fresh(3);
  Tensor y = ops::batchnorm2d(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), stats, ops::NormMode::kTrain);
  const std::size_t plane = 30;
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < plane; ++i) m += y[c * plane + i];
    m /= plane;
    for (std::size_t i = 0; i < plane; ++i) v += (y[c * plane + i] - m) * (y[c * plane + i] - m);
    v /= plane;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }

  Tensor z = ops::batchnorm2d(y, Tensor::full({3}, 2.0), Tensor::full({3}, 3.0), stats, ops::NormMode::kTrain);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < plane; ++i) m += z[c * plane + i];
    m /= plane;
    for (std::size_t i = 0; i < plane; ++i) v += (z[c * plane + i] - m) * (z[c * plane + i] - m);
    CHECK(m == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(std::sqrt(v / plane) == doctest::Approx(2.0).epsilon(1e-4));
  }

  SUBCASE("zero-variance channel stays finite") {
    auto s = ops::BatchNormStats::fresh(1);
    Tensor flat = ops::batchnorm2d(Tensor::full({1, 3, 3}, 0.7), Tensor::full({1}, 1.0), Tensor::zeros({1}), s,
                                   ops::NormMode::kTrain);
    CHECK(all_finite(flat.data()));
    CHECK(all_finite(s.running_var.data()));
  }
  SUBCASE("eval mode needs populated statistics") {
    ops::BatchNormStats empty;
    CHECK_THROWS_AS(ops::batchnorm2d(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), empty, ops::NormMode::kEval),
                    UsageError);
  }
  SUBCASE("first train batch becomes the running statistics") {
    auto s = ops::BatchNormStats::fresh(1);
    Tensor in = Tensor::from({1, 1, 4}, {1.0, 2.0, 3.0, 6.0});
    ops::batchnorm2d(in, Tensor::full({1}, 1.0), Tensor::zeros({1}), s, ops::NormMode::kTrain);
    CHECK(s.running_mean[0] == doctest::Approx(3.0));
    CHECK(s.running_var[0] == doctest::Approx(14.0 / 3.0));  // unbiased
    CHECK(s.batches_tracked[0] == 1.0);
  }
}

TEST_CASE("relu, softmax and mse examples") {
  Tensor r = ops::relu(Tensor::from({3}, {-1.0, 0.0, 2.0}));
  CHECK(r.values() == std::vector<double>{0.0, 0.0, 2.0});
  Tensor s = ops::softmax(Tensor::zeros({5}));
  for (double p : s.data()) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    Tensor logits = random_tensor(rng, {7}, -50, 50, false);
    Tensor p = ops::softmax(logits);
    double total = 0.0;
    for (double v : p.data()) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  Tensor x = random_tensor(rng, {4, 4}, -1, 1, false);
  CHECK(ops::mse_loss(x, x).item() == 0.0);
  CHECK_THROWS_AS(ops::mse_loss(x, Tensor::zeros({16})), DimensionError);
  CHECK_THROWS_AS(ops::add(x, Tensor::zeros({4, 5})), DimensionError);
}

TEST_CASE("backward semantics") {
  Tensor x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  Tensor loss = ops::sum(ops::scale(x, 2.0));
  loss.backward();
  for (double g : x.grad()) CHECK(g == 2.0);
  loss.backward();
  for (double g : x.grad()) CHECK(g == 4.0);
  x.zero_grad();
  for (double g : x.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(Tensor::scalar(1.0).backward(), UsageError);
  CHECK_THROWS_AS(ops::scale(x, 1.0).backward(), UsageError);  // not a scalar
  {
    NoGradGuard guard;
    CHECK_THROWS_AS(ops::sum(x).backward(), UsageError);
  }
}

TEST_CASE("AdamW examples") {
  SUBCASE("first step moves by the learning rate") {
    Tensor p = Tensor::from({1}, {0.0}, true);
    AdamW opt({p}, {.learning_rate = 1e-3, .weight_decay = 0.0});
    p.mutable_grad()[0] = 1.0;
    opt.step();
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("zero gradient and no decay leaves the parameter") {
    Tensor p = Tensor::from({2}, {0.3, -0.4}, true);
    AdamW opt({p}, {.learning_rate = 1e-2, .weight_decay = 0.0});
    p.zero_grad();
    opt.step();
    CHECK(p.values() == std::vector<double>{0.3, -0.4});
  }
  SUBCASE("decoupled weight decay") {
    Tensor p = Tensor::from({1}, {1.0}, true);
    AdamW opt({p}, {.learning_rate = 0.01, .weight_decay = 0.1});
    p.zero_grad();
    opt.step();
    CHECK(p[0] == doctest::Approx(0.999).epsilon(1e-15));
  }
  SUBCASE("non-finite gradient aborts the whole update") {
    Tensor a = Tensor::from({1}, {1.0}, true), b = Tensor::from({1}, {2.0}, true);
    AdamW opt({a, b}, {});
    a.mutable_grad()[0] = 1.0;
    b.mutable_grad()[0] = std::nan("");
    CHECK_THROWS_AS(opt.step(), NumericError);
    CHECK(a[0] == 1.0);
    CHECK(b[0] == 2.0);
    CHECK(opt.step_count() == 0);
  }
  SUBCASE("step count increases by one per update") {
    Tensor p = Tensor::from({1}, {1.0}, true);
    AdamW opt({p}, {});
    for (int i = 1; i <= 5; ++i) {
      p.mutable_grad()[0] = 0.1 * i;
      opt.step();
      CHECK(opt.step_count() == i);
      CHECK(opt.first_moments()[0].shape() == p.shape());
    }
  }
}
