#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "ucf/trainer.hpp"

using namespace ucf;
namespace fs = std::filesystem;

namespace {

bool reports_equal(const LossReport& a, const LossReport& b) {
  return a.ce_common == b.ce_common && a.ce_specific == b.ce_specific &&
         a.reconstruction == b.reconstruction &&
         a.contrastive == b.contrastive && a.total == b.total;
}

}  // namespace

TEST_CASE("train config validation and kv round-trip") {
  TrainConfig c = fixtures::micro_train_config();
  c.validate();
  const TrainConfig back = TrainConfig::from_kv(c.to_kv());
  CHECK(back.to_kv().entries() == c.to_kv().entries());

  TrainConfig bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  TrainConfig nested = c;
  nested.ablation.disentangle = false;
  nested.ablation.multitask = true;
  nested.ablation.contrastive = false;
  CHECK_THROWS_AS(nested.validate(), ValidationError);
  CHECK_THROWS_AS(AblationFlags::from_code("DX"), ValidationError);
  CHECK(AblationFlags::from_code("DM").code() == "DM");
}

TEST_CASE("first step produces finite nonnegative losses") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  auto provider = make_provider(manifest);
  auto state = init_trainer(fixtures::micro_train_config(),
                            manifest.method_vocabulary);
  const auto batch = sample_pair_batch(manifest, *provider, 4,
                                       state->sampler_rng);
  const LossReport r = train_step(*state, batch);
  for (double v : {r.ce_common, r.ce_specific, r.reconstruction,
                   r.contrastive, r.total}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK(state->step == 1);
}

TEST_CASE("every report satisfies the weighted-sum identity") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  cfg.steps = 4;
  const auto result = train(cfg, manifest);
  REQUIRE(result.history.size() == 4);
  for (const auto& r : result.history) {
    const double recomputed = r.ce_common + cfg.weights.lambda1 * r.ce_specific +
                              cfg.weights.lambda2 * r.reconstruction +
                              cfg.weights.lambda3 * r.contrastive;
    CHECK(r.total == doctest::Approx(recomputed).epsilon(1e-12));
  }
}

TEST_CASE("ablation D zeroes the multitask and contrastive components") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  cfg.ablation = AblationFlags::from_code("D");
  const auto result = train(cfg, manifest);
  for (const auto& r : result.history) {
    CHECK(r.ce_specific == 0.0);
    CHECK(r.contrastive == 0.0);
    CHECK(r.reconstruction > 0.0);
  }
}

TEST_CASE("without multitask no update ever reaches H_s") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  cfg.ablation = AblationFlags::from_code("D");
  auto state = init_trainer(cfg, manifest.method_vocabulary);
  auto provider = make_provider(manifest);

  std::vector<Tensor<float>> before;
  for (const auto& [name, v] : state->model->store().params())
    if (name.rfind("head.specific.", 0) == 0) before.push_back(v->value);
  REQUIRE(!before.empty());

  for (int i = 0; i < 3; ++i) {
    const auto batch =
        sample_pair_batch(manifest, *provider, 4, state->sampler_rng);
    train_step(*state, batch);
  }
  std::size_t k = 0;
  for (const auto& [name, v] : state->model->store().params())
    if (name.rfind("head.specific.", 0) == 0)
      CHECK(v->value.data == before[k++].data);
}

TEST_CASE("baseline: only the common CE is reported, checkpoint loads back") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  const auto dir = fixtures::fresh_dir("baseline");
  const auto result = baseline_train(cfg, manifest, dir.string());
  for (const auto& r : result.history) {
    CHECK(r.ce_specific == 0.0);
    CHECK(r.reconstruction == 0.0);
    CHECK(r.contrastive == 0.0);
    CHECK(r.total == r.ce_common);
  }
  auto loaded = load_checkpoint(result.checkpoint_path);
  CHECK(!loaded->model->disentangled());
  // loadable and usable by the eval path
  Rng rng(1);
  Tensor<float> imgs({2, 3, 16, 16});
  for (auto& v : imgs.data) v = static_cast<float>(rng.uniform_real());
  const auto scores = loaded->model->detect(imgs);
  CHECK(scores.size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("identical config and seed reproduce the metrics log exactly") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  cfg.steps = 4;
  cfg.augment = true;  // default augmentation pipeline in the loop
  const auto a = train(cfg, manifest);
  const auto b = train(cfg, manifest);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(reports_equal(a.history[i], b.history[i]));
}

TEST_CASE("resume from a periodic checkpoint matches the uninterrupted run") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  cfg.steps = 6;
  cfg.checkpoint_every = 3;
  cfg.augment = true;

  const auto dir_a = fixtures::fresh_dir("resume_a");
  const auto full = train(cfg, manifest, dir_a.string());
  REQUIRE(full.history.size() == 6);

  const auto dir_b = fixtures::fresh_dir("resume_b");
  const auto resumed =
      train(cfg, manifest, dir_b.string(),
            (dir_a / "checkpoint_step3.bin").string());
  REQUIRE(resumed.history.size() == 3);
  // step k+1 report identical to the uninterrupted run, and so on
  for (int i = 0; i < 3; ++i)
    CHECK(reports_equal(resumed.history[i], full.history[3 + i]));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("checkpoint round-trip preserves every tensor bit") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  TrainConfig cfg = fixtures::micro_train_config();
  const auto dir = fixtures::fresh_dir("ckpt");
  const auto result = train(cfg, manifest, dir.string());
  auto loaded = load_checkpoint(result.checkpoint_path);

  auto fresh = train(cfg, manifest);  // same schedule, in-memory
  (void)fresh;
  auto reference = init_trainer(cfg, manifest.method_vocabulary);
  auto provider = make_provider(manifest);
  for (int i = 0; i < cfg.steps; ++i) {
    auto batch = sample_pair_batch(manifest, *provider, cfg.batch_pairs,
                                   reference->sampler_rng);
    train_step(*reference, batch);
  }
  const auto& a = loaded->model->store().params();
  const auto& b = reference->model->store().params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->value.data == b[i].second->value.data);
  }
  CHECK(loaded->step == reference->step);
  CHECK(loaded->sampler_rng == reference->sampler_rng);
  fs::remove_all(dir);
}

TEST_CASE("metrics line formatting is stable") {
  LossReport r;
  r.ce_common = 0.6931471805599453;
  r.total = 0.6931471805599453;
  CHECK(format_metrics_line(12, r) ==
        "12\t0.693147181\t0\t0\t0\t0.693147181");
}

TEST_CASE("a poisoned parameter surfaces as a divergence error") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  auto state = init_trainer(fixtures::micro_train_config(),
                            manifest.method_vocabulary);
  auto provider = make_provider(manifest);
  auto batch = sample_pair_batch(manifest, *provider, 4, state->sampler_rng);
  auto w = state->model->store().find("head.common.out.w");
  w->value[0] = std::nanf("");
  CHECK_THROWS_AS(train_step(*state, batch), DivergenceError);
}

TEST_CASE("overfit smoke: repeated batch halves the loss on a tiny model") {
  const auto manifest = generate_synthetic_corpus(fixtures::micro_corpus_spec());
  auto provider = make_provider(manifest);
  TrainConfig cfg = fixtures::micro_train_config();
  cfg.steps = 120;
  auto state = init_trainer(cfg, manifest.method_vocabulary);
  const auto batch =
      sample_pair_batch(manifest, *provider, 4, state->sampler_rng);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 120; ++i) {
    const auto r = train_step(*state, batch);
    if (i == 0) first = r.total;
    last = r.total;
  }
  CHECK(last < 0.5 * first);
}
