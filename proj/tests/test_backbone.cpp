#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "gradcheck.hpp"
#include "ucf/backbone.hpp"

using namespace ucf;
namespace agg = ucf::ag;

namespace {

Tensor<float> random_images(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({n, 3, size, size});
  for (auto& v : t.data) v = static_cast<float>(rng.uniform_real());
  return t;
}

}  // namespace

TEST_CASE("tiny_cnn shape contract: 64x64 input, C_f=64, C_c=64") {
  BackboneConfig cfg;  // tiny_cnn, 64, 64/64
  nn::ParamStore<float> ps;
  Rng rng(1);
  DualEncoder<float> enc(cfg, ps, rng);
  auto x = agg::constant(random_images(2, 64, 3));
  auto bundle = enc.encode(x, false);
  CHECK(bundle.f_specific->value.shape == std::vector<int>{2, 32, 8, 8});
  CHECK(bundle.f_common->value.shape == std::vector<int>{2, 32, 8, 8});
  CHECK(bundle.content->value.shape == std::vector<int>{2, 64, 8, 8});
  CHECK(bundle.fingerprint->value.shape == std::vector<int>{2, 64, 8, 8});
}

TEST_CASE("xception_style trunk obeys the same downsampling contract") {
  BackboneConfig cfg;
  cfg.name = "xception_style";
  cfg.input_size = 32;
  cfg.fingerprint_channels = 16;
  cfg.content_channels = 12;
  cfg.width = 0.5;
  nn::ParamStore<float> ps;
  Rng rng(2);
  DualEncoder<float> enc(cfg, ps, rng);
  auto bundle = enc.encode(agg::constant(random_images(2, 32, 4)), true);
  CHECK(bundle.f_specific->value.shape == std::vector<int>{2, 8, 4, 4});
  CHECK(bundle.content->value.shape == std::vector<int>{2, 12, 4, 4});
  CHECK(bundle.content->value.all_finite());
}

TEST_CASE("content and fingerprint encoders share no parameters") {
  BackboneConfig cfg;
  cfg.width = 0.25;
  nn::ParamStore<float> ps;
  Rng rng(5);
  DualEncoder<float> enc(cfg, ps, rng);
  std::set<const void*> content_ptrs, fingerprint_ptrs;
  int content_count = 0, fingerprint_count = 0;
  for (const auto& [name, v] : ps.params()) {
    if (name.rfind("encoder.content.", 0) == 0) {
      content_ptrs.insert(v->value.ptr());
      ++content_count;
    } else if (name.rfind("encoder.fingerprint.", 0) == 0) {
      fingerprint_ptrs.insert(v->value.ptr());
      ++fingerprint_count;
    }
  }
  CHECK(content_count > 0);
  // identical topology, so the parameter tensor count matches exactly
  CHECK(content_count == fingerprint_count);
  for (const void* p : content_ptrs) CHECK(fingerprint_ptrs.count(p) == 0);
}

TEST_CASE("evaluation-mode encoding is bitwise deterministic") {
  BackboneConfig cfg;
  cfg.width = 0.25;
  cfg.fingerprint_channels = 8;
  cfg.content_channels = 8;
  nn::ParamStore<float> ps;
  Rng rng(6);
  DualEncoder<float> enc(cfg, ps, rng);
  auto imgs = random_images(3, 64, 7);
  auto a = enc.encode(agg::constant(imgs), false);
  auto b = enc.encode(agg::constant(imgs), false);
  CHECK(a.content->value.data == b.content->value.data);
  CHECK(a.f_specific->value.data == b.f_specific->value.data);
  CHECK(a.f_common->value.data == b.f_common->value.data);
}

TEST_CASE("gradient separation: a loss on f_common never reaches E_c") {
  BackboneConfig cfg;
  cfg.input_size = 16;
  cfg.width = 0.2;
  cfg.fingerprint_channels = 8;
  cfg.content_channels = 8;
  nn::ParamStore<float> ps;
  Rng rng(8);
  DualEncoder<float> enc(cfg, ps, rng);
  auto bundle = enc.encode(agg::constant(random_images(2, 16, 9)), true);
  agg::backward(agg::mean_all(agg::square(bundle.f_common)));
  for (const auto& [name, v] : ps.params()) {
    const bool is_content = name.rfind("encoder.content.", 0) == 0;
    const bool is_fingerprint = name.rfind("encoder.fingerprint.", 0) == 0;
    if (is_content) {
      bool all_zero = true;
      for (std::int64_t i = 0; i < v->grad.numel(); ++i)
        if (v->grad[i] != 0.0f) all_zero = false;
      CHECK(all_zero);
    }
    if (is_fingerprint) CHECK(!v->grad.data.empty());
  }
  ps.zero_grad();
  auto bundle2 = enc.encode(agg::constant(random_images(2, 16, 10)), true);
  agg::backward(agg::mean_all(agg::square(bundle2.content)));
  for (const auto& [name, v] : ps.params())
    if (name.rfind("encoder.fingerprint.", 0) == 0) {
      bool all_zero = v->grad.data.empty();
      if (!all_zero) {
        all_zero = true;
        for (std::int64_t i = 0; i < v->grad.numel(); ++i)
          if (v->grad[i] != 0.0f) all_zero = false;
      }
      CHECK(all_zero);
    }
}

TEST_CASE("outputs stay finite for inputs across [0,1]") {
  BackboneConfig cfg;
  cfg.width = 0.25;
  cfg.fingerprint_channels = 8;
  cfg.content_channels = 8;
  nn::ParamStore<float> ps;
  Rng rng(11);
  DualEncoder<float> enc(cfg, ps, rng);
  for (float fill : {0.0f, 0.5f, 1.0f}) {
    auto x = agg::constant(Tensor<float>::full({2, 3, 64, 64}, fill));
    auto bundle = enc.encode(x, true);
    CHECK(bundle.content->value.all_finite());
    CHECK(bundle.fingerprint->value.all_finite());
  }
}

TEST_CASE("configuration errors: bad input size and unknown backbone") {
  BackboneConfig cfg;
  nn::ParamStore<float> ps;
  Rng rng(12);
  DualEncoder<float> enc(cfg, ps, rng);
  CHECK_THROWS_AS(enc.encode(agg::constant(random_images(1, 32, 1)), false),
                  ShapeError);

  BackboneConfig bad;
  bad.name = "resnet_ha";
  nn::ParamStore<float> ps2;
  CHECK_THROWS_AS(make_trunk<float>(bad, 8, ps2, "x", rng), ValidationError);

  BackboneConfig odd;
  odd.fingerprint_channels = 7;
  CHECK_THROWS_AS(odd.validate(), ValidationError);
}

TEST_CASE("registry exposes both required backbones") {
  auto& reg = backbone_registry<float>();
  CHECK(reg.count("tiny_cnn") == 1);
  CHECK(reg.count("xception_style") == 1);
}
