#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ucf/autograd.hpp"

using namespace ucf;
namespace agg = ucf::ag;
using gradcheck::max_error;
using gradcheck::random_tensor;

namespace {
constexpr double kOpTol = 1e-6;
}

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  auto a = agg::make_var(random_tensor({2, 3, 4, 4}, rng), true);
  auto b = agg::make_var(random_tensor({2, 3, 4, 4}, rng), true);

  CHECK(max_error({a, b}, [&] {
          return agg::mean_all(agg::mul(agg::add(a, b), agg::sub(a, b)));
        }) < kOpTol);
  CHECK(max_error({a}, [&] {
          return agg::mean_all(agg::scalar_mul(agg::add_scalar(a, 0.7), 1.3));
        }) < kOpTol);
  CHECK(max_error({a}, [&] { return agg::mean_all(agg::square(a)); }) <
        kOpTol);
  CHECK(max_error({a}, [&] { return agg::mean_all(agg::sigmoid(a)); }) <
        kOpTol);
  // keep values away from the relu kink
  auto c = agg::make_var(random_tensor({3, 5}, rng, 0.2, 1.0), true);
  auto d = agg::make_var(random_tensor({3, 5}, rng, -1.0, -0.2), true);
  CHECK(max_error({c, d}, [&] {
          return agg::mean_all(agg::add(agg::relu(c), agg::relu(d)));
        }) < kOpTol);
  CHECK(max_error({c, d}, [&] {
          return agg::mean_all(agg::add(agg::leaky_relu(c, 0.2),
                                        agg::leaky_relu(d, 0.2)));
        }) < kOpTol);
  CHECK(max_error({c}, [&] { return agg::mean_all(agg::sqrt_safe(c)); }) <
        kOpTol);
  CHECK(max_error({c}, [&] { return agg::mean_all(agg::recip(c)); }) < kOpTol);
}

TEST_CASE("reductions and broadcasts match finite differences") {
  Rng rng(11);
  auto x = agg::make_var(random_tensor({2, 3, 4, 4}, rng), true);
  auto s = agg::make_var(random_tensor({2, 3}, rng, 0.5, 1.5), true);

  CHECK(max_error({x}, [&] { return agg::sum_all(agg::spatial_mean(x)); }) <
        kOpTol);
  for (auto op : {agg::BcOp::Add, agg::BcOp::Sub, agg::BcOp::Mul}) {
    CHECK(max_error({x, s}, [&] {
            return agg::mean_all(agg::square(agg::broadcast_nc(x, s, op)));
          }) < kOpTol);
  }
  CHECK(max_error({x}, [&] {
          return agg::mean_all(agg::channel_slice(x, 1, 3));
        }) < kOpTol);
  auto y = agg::make_var(random_tensor({2, 2, 4, 4}, rng), true);
  CHECK(max_error({x, y}, [&] {
          return agg::mean_all(agg::square(agg::channel_concat(x, y)));
        }) < kOpTol);

  auto m = agg::make_var(random_tensor({5, 3}, rng), true);
  CHECK(max_error({m}, [&] {
          return agg::mean_all(agg::square(agg::gather_rows(m, {0, 2, 2, 4})));
        }) < kOpTol);
  CHECK(max_error({m}, [&] {
          return agg::mean_all(agg::square(agg::row_sum(m)));
        }) < kOpTol);
}

TEST_CASE("linear layer gradients") {
  Rng rng(13);
  auto x = agg::make_var(random_tensor({4, 6}, rng), true);
  auto w = agg::make_var(random_tensor({6, 3}, rng), true);
  auto b = agg::make_var(random_tensor({3}, rng), true);
  CHECK(max_error({x, w, b}, [&] {
          return agg::mean_all(agg::square(agg::linear(x, w, b)));
        }) < kOpTol);
}

TEST_CASE("conv2d gradients for stride 1 and stride 2") {
  Rng rng(17);
  auto x = agg::make_var(random_tensor({2, 3, 6, 6}, rng), true);
  auto w = agg::make_var(random_tensor({4, 3, 3, 3}, rng), true);
  auto b = agg::make_var(random_tensor({4}, rng), true);
  CHECK(max_error({x, w, b}, [&] {
          return agg::mean_all(agg::square(agg::conv2d(x, w, b, 1, 1)));
        }) < kOpTol);
  CHECK(max_error({x, w, b}, [&] {
          return agg::mean_all(agg::square(agg::conv2d(x, w, b, 2, 1)));
        }) < kOpTol);
  // 1x1 kernel, no padding
  auto w1 = agg::make_var(random_tensor({2, 3, 1, 1}, rng), true);
  auto b1 = agg::make_var(random_tensor({2}, rng), true);
  CHECK(max_error({x, w1, b1}, [&] {
          return agg::mean_all(agg::square(agg::conv2d(x, w1, b1, 1, 0)));
        }) < kOpTol);
}

TEST_CASE("conv2d known value: 1x1 identity kernel") {
  Tensor<double> x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor<double> w({1, 1, 1, 1}, {2.0});
  Tensor<double> b({1}, {0.5});
  auto y = agg::conv2d(agg::constant(x), agg::constant(w), agg::constant(b), 1,
                       0);
  CHECK(y->value[0] == doctest::Approx(2.5));
  CHECK(y->value[3] == doctest::Approx(8.5));
}

TEST_CASE("depthwise conv gradients") {
  Rng rng(19);
  auto x = agg::make_var(random_tensor({2, 3, 5, 5}, rng), true);
  auto w = agg::make_var(random_tensor({3, 1, 3, 3}, rng), true);
  auto b = agg::make_var(random_tensor({3}, rng), true);
  CHECK(max_error({x, w, b}, [&] {
          return agg::mean_all(
              agg::square(agg::depthwise_conv2d(x, w, b, 1, 1)));
        }) < kOpTol);
  CHECK(max_error({x, w, b}, [&] {
          return agg::mean_all(
              agg::square(agg::depthwise_conv2d(x, w, b, 2, 1)));
        }) < kOpTol);
}

TEST_CASE("upsample nearest gradients and values") {
  Rng rng(23);
  auto x = agg::make_var(random_tensor({1, 2, 3, 3}, rng), true);
  auto y = agg::upsample_nearest2(x);
  CHECK(y->value.shape == std::vector<int>{1, 2, 6, 6});
  CHECK(y->value[0] == x->value[0]);
  CHECK(y->value[1] == x->value[0]);
  CHECK(max_error({x}, [&] {
          return agg::mean_all(agg::square(agg::upsample_nearest2(x)));
        }) < kOpTol);
}

TEST_CASE("batchnorm2d train mode: normalized stats and gradients") {
  Rng rng(29);
  auto x = agg::make_var(random_tensor({3, 2, 4, 4}, rng), true);
  auto gamma = agg::make_var(Tensor<double>::full({2}, 1.0), true);
  auto beta = agg::make_var(Tensor<double>::zeros({2}), true);
  Tensor<double> rm = Tensor<double>::zeros({2});
  Tensor<double> rv = Tensor<double>::full({2}, 1.0);

  auto y = agg::batchnorm2d(x, gamma, beta, rm, rv, true);
  const std::int64_t m = 3 * 4 * 4;
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) mean += y->value[(n * 2 + c) * 16 + i];
    mean /= static_cast<double>(m);
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) {
        const double d = y->value[(n * 2 + c) * 16 + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(m);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  CHECK(max_error({x, gamma, beta}, [&] {
          return agg::mean_all(agg::square(
              agg::batchnorm2d(x, gamma, beta, rm, rv, true)));
        }) < 1e-5);
  CHECK(max_error({x, gamma, beta}, [&] {
          return agg::mean_all(agg::square(
              agg::batchnorm2d(x, gamma, beta, rm, rv, false)));
        }) < kOpTol);
}

TEST_CASE("softmax cross-entropy gradients and values") {
  Rng rng(31);
  auto logits = agg::make_var(random_tensor({4, 3}, rng, -2.0, 2.0), true);
  std::vector<int> labels{0, 2, 1, 2};
  CHECK(max_error({logits}, [&] {
          return agg::softmax_cross_entropy(logits, labels);
        }) < kOpTol);

  auto uniform = agg::constant(Tensor<double>::zeros({5, 3}));
  auto l = agg::softmax_cross_entropy(uniform, {0, 1, 2, 0, 1});
  CHECK(l->value[0] == doctest::Approx(std::log(3.0)));

  CHECK_THROWS_AS(agg::softmax_cross_entropy(uniform, {0, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(agg::softmax_cross_entropy(uniform, {0, 1, 2, 0, 7}),
                  std::invalid_argument);
}

TEST_CASE("l1 mean gradients away from ties") {
  Rng rng(37);
  auto a = agg::make_var(random_tensor({2, 3, 4, 4}, rng, 0.5, 1.0), true);
  auto b = agg::make_var(random_tensor({2, 3, 4, 4}, rng, -1.0, -0.5), true);
  CHECK(max_error({a, b}, [&] { return agg::l1_mean(a, b); }) < kOpTol);
}

TEST_CASE("backward requires a scalar root") {
  auto a = agg::make_var(Tensor<double>::zeros({2, 2}), true);
  CHECK_THROWS_AS(agg::backward(agg::square(a)), std::invalid_argument);
}

TEST_CASE("graph reuse accumulates parameter gradients across calls") {
  // the same weight used twice must receive both contributions
  auto w = agg::make_var(Tensor<double>({1}, {2.0}), true);
  auto x = agg::constant(Tensor<double>({1}, {3.0}));
  auto y = agg::add(agg::mul(w, x), agg::mul(w, w));
  agg::backward(agg::sum_all(y));
  CHECK(w->grad[0] == doctest::Approx(3.0 + 4.0));
}
