#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ucf/decoder.hpp"

using namespace ucf;
namespace agg = ucf::ag;

namespace {

template <typename S>
agg::Var<S> make_const(std::vector<int> shape, std::vector<S> values) {
  return agg::constant(Tensor<S>(std::move(shape), std::move(values)));
}

// per-channel population stats of one (n, c) plane
template <typename S>
std::pair<double, double> channel_stats(const Tensor<S>& t, int n, int c) {
  const int C = t.shape[1];
  const std::int64_t hw =
      static_cast<std::int64_t>(t.shape[2]) * t.shape[3];
  const S* p = t.ptr() + (static_cast<std::int64_t>(n) * C + c) * hw;
  double mean = 0.0;
  for (std::int64_t i = 0; i < hw; ++i) mean += p[i];
  mean /= static_cast<double>(hw);
  double var = 0.0;
  for (std::int64_t i = 0; i < hw; ++i) {
    const double d = p[i] - mean;
    var += d * d;
  }
  return {mean, std::sqrt(var / static_cast<double>(hw))};
}

}  // namespace

TEST_CASE("adain hand case: content [1,3] with fingerprint [0,4]") {
  // population stats: mu(c)=2, sigma(c)=1, mu(f)=2, sigma(f)=2, so
  // 2*(1-2)/1+2 = 0 and 2*(3-2)/1+2 = 4; the output then carries the
  // fingerprint's mean and std exactly
  auto c = make_const<double>({1, 1, 1, 2}, {1.0, 3.0});
  auto f = make_const<double>({1, 1, 1, 2}, {0.0, 4.0});
  auto out = adain(c, f);
  CHECK(std::abs(out->value[0] - 0.0) < 1e-5);
  CHECK(std::abs(out->value[1] - 4.0) < 1e-5);
}

TEST_CASE("adain(c, c) is the identity for non-constant channels") {
  Rng rng(5);
  auto t = gradcheck::random_tensor({2, 3, 4, 4}, rng, -2.0, 2.0);
  auto c = agg::constant(t);
  auto out = adain(c, c);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    CHECK(std::abs(out->value[i] - t[i]) < 1e-5);
}

TEST_CASE("constant content channel collapses to the fingerprint mean") {
  auto c = make_const<double>({1, 1, 2, 2}, {0.7, 0.7, 0.7, 0.7});
  auto f = make_const<double>({1, 1, 2, 2}, {1.0, 2.0, 3.0, 6.0});
  auto out = adain(c, f);
  for (int i = 0; i < 4; ++i)
    CHECK(out->value[i] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adain rejects channel mismatch") {
  auto c = agg::constant(Tensor<double>::zeros({1, 3, 2, 2}));
  auto f = agg::constant(Tensor<double>::zeros({1, 4, 2, 2}));
  CHECK_THROWS_AS(adain(c, f), ShapeError);
}

TEST_CASE("property: output channel statistics equal the fingerprint's") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform(3));
    const int ch = 1 + static_cast<int>(rng.uniform(4));
    // non-degenerate spatial extent keeps channel variances well above the
    // epsilon guard, which the 1e-5 exactness bound presumes
    const int h = 4 + static_cast<int>(rng.uniform(6));
    const int w = 4 + static_cast<int>(rng.uniform(6));
    // variances well away from zero keep the epsilon guard negligible
    auto ct = gradcheck::random_tensor({n, ch, h, w}, rng, -3.0, 3.0);
    auto ft = gradcheck::random_tensor({n, ch, h, w}, rng, -3.0, 3.0);
    auto out = adain(agg::constant(ct), agg::constant(ft));
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < ch; ++c) {
        const auto [mf, sf] = channel_stats(ft, b, c);
        const auto [mo, so] = channel_stats(out->value, b, c);
        CHECK(std::abs(mo - mf) < 1e-5);
        CHECK(std::abs(so - sf) < 1e-5);
      }
  }
}

TEST_CASE("property: adain is idempotent in the style argument") {
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 4 + static_cast<int>(rng.uniform(5));
    auto ct = gradcheck::random_tensor({2, 2, h, h}, rng, -3.0, 3.0);
    auto ft = gradcheck::random_tensor({2, 2, h, h}, rng, -3.0, 3.0);
    auto once = adain(agg::constant(ct), agg::constant(ft));
    auto twice = adain(once, agg::constant(ft));
    for (std::int64_t i = 0; i < once->value.numel(); ++i)
      CHECK(std::abs(twice->value[i] - once->value[i]) < 1e-5);
  }
}

TEST_CASE("adain gradients match finite differences") {
  Rng rng(7);
  auto c = agg::make_var(gradcheck::random_tensor({2, 2, 3, 3}, rng, -2.0, 2.0),
                         true);
  auto f = agg::make_var(gradcheck::random_tensor({2, 2, 3, 3}, rng, -2.0, 2.0),
                         true);
  CHECK(gradcheck::max_error({c, f}, [&] {
          return agg::mean_all(agg::square(adain(c, f)));
        }) < 1e-5);
}
