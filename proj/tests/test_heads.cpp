#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "gradcheck.hpp"
#include "ucf/heads.hpp"

using namespace ucf;
namespace agg = ucf::ag;

TEST_CASE("head shape contract: 32-channel map to 2 logits") {
  nn::ParamStore<float> ps;
  Rng rng(1);
  HeadConfig cfg;
  cfg.n_classes = 2;
  MlpHead<float> head(cfg, 32, ps, "head.common", rng);
  Rng drng(2);
  Tensor<float> fmap({4, 32, 8, 8});
  for (auto& v : fmap.data) v = static_cast<float>(drng.normal());
  auto logits = head.forward(agg::constant(fmap));
  CHECK(logits->value.shape == std::vector<int>{4, 2});
  CHECK(logits->value.all_finite());
}

TEST_CASE("specific head sized by the method vocabulary [real,A,B,C,D]") {
  nn::ParamStore<float> ps;
  Rng rng(3);
  HeadConfig cfg;
  cfg.n_classes = 5;
  MlpHead<float> head(cfg, 32, ps, "head.specific", rng);
  Tensor<float> fmap = Tensor<float>::full({2, 32, 4, 4}, 0.25f);
  auto logits = head.forward(agg::constant(fmap));
  CHECK(logits->value.shape == std::vector<int>{2, 5});
}

TEST_CASE("H_c and H_s share architecture but no parameters") {
  nn::ParamStore<float> ps;
  Rng rng(5);
  HeadConfig cfg;
  MlpHead<float> hc(cfg, 16, ps, "head.common", rng);
  HeadConfig cfg_s = cfg;
  cfg_s.n_classes = 4;
  MlpHead<float> hs(cfg_s, 16, ps, "head.specific", rng);
  std::set<const void*> common_ptrs;
  int n_common = 0, n_specific = 0;
  for (const auto& [name, v] : ps.params()) {
    if (name.rfind("head.common.", 0) == 0) {
      common_ptrs.insert(v->value.ptr());
      ++n_common;
    }
    if (name.rfind("head.specific.", 0) == 0) {
      CHECK(common_ptrs.count(v->value.ptr()) == 0);
      ++n_specific;
    }
  }
  CHECK(n_common > 0);
  CHECK(n_common == n_specific);  // same layer structure
}

TEST_CASE("head forward is permutation-equivariant over the batch") {
  nn::ParamStore<float> ps;
  Rng rng(7);
  MlpHead<float> head(HeadConfig{{32, 32}, 3}, 8, ps, "head", rng);
  Rng drng(8);
  Tensor<float> fmap({3, 8, 4, 4});
  for (auto& v : fmap.data) v = static_cast<float>(drng.normal());
  auto base = head.forward(agg::constant(fmap));

  const int perm[3] = {2, 0, 1};
  Tensor<float> permuted({3, 8, 4, 4});
  const std::int64_t stride = 8 * 16;
  for (int i = 0; i < 3; ++i)
    std::copy_n(fmap.ptr() + perm[i] * stride, stride,
                permuted.ptr() + i * stride);
  auto shuffled = head.forward(agg::constant(permuted));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(shuffled->value[i * 3 + k] == base->value[perm[i] * 3 + k]);
}

TEST_CASE("wrong feature width is a shape error") {
  nn::ParamStore<float> ps;
  Rng rng(9);
  MlpHead<float> head(HeadConfig{{16}, 2}, 8, ps, "head", rng);
  auto bad = agg::constant(Tensor<float>::zeros({1, 12, 4, 4}));
  CHECK_THROWS_AS(head.forward(bad), std::invalid_argument);
}

TEST_CASE("head gradients match finite differences") {
  nn::ParamStore<double> ps;
  Rng rng(11);
  MlpHead<double> head(HeadConfig{{6, 6}, 3}, 4, ps, "head", rng);
  auto x = agg::make_var(gradcheck::random_tensor({2, 4, 3, 3}, rng), true);
  std::vector<agg::Var<double>> leaves{x};
  for (const auto& [name, v] : ps.params()) leaves.push_back(v);
  CHECK(gradcheck::max_error(leaves, [&] {
          return agg::softmax_cross_entropy(head.forward(x), {0, 2});
        }) < 1e-3);
}
