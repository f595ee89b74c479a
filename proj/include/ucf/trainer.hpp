#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ucf/config.hpp"
#include "ucf/losses.hpp"
#include "ucf/model.hpp"
#include "ucf/synth.hpp"

namespace ucf {

struct AblationFlags {
  bool disentangle = true;  // D
  bool multitask = true;    // M
  bool contrastive = true;  // C

  void validate() const {
    if (multitask && !disentangle)
      throw ValidationError("ablation: multitask requires disentangle");
    if (contrastive && !disentangle)
      throw ValidationError("ablation: contrastive requires disentangle");
  }

  std::string code() const {
    if (!disentangle) return "none";
    std::string s = "D";
    if (multitask) s += "M";
    if (contrastive) s += "C";
    return s;
  }

  static AblationFlags from_code(const std::string& code);
};

struct TrainConfig {
  BackboneConfig backbone;
  LossWeights weights;
  double learning_rate = 2e-4;
  int batch_pairs = 16;  // 32 images per step
  int steps = 2000;
  std::uint64_t seed = 1;
  AblationFlags ablation;
  Fusion decoder_fusion = Fusion::kAdaIn;
  CrossTarget cross_target = CrossTarget::kContentDonor;
  bool augment = true;
  AugConfig aug;
  int checkpoint_every = 500;

  void validate() const;
  static TrainConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

// Mutable training state: model parameters, optimizer moments and the three
// sampling streams. All of it round-trips through checkpoints bit-exactly.
struct TrainerState {
  TrainConfig config;
  std::unique_ptr<Model> model;
  nn::Adam<float> optimizer;
  Rng sampler_rng;
  Rng aug_rng;
  Rng triplet_rng;
  std::int64_t step = 0;
};

std::unique_ptr<TrainerState> init_trainer(
    const TrainConfig& config, const std::vector<std::string>& vocabulary);

// One optimization step on a sampled pair batch: encode, recombine/decode,
// heads, enabled losses, Adam update. Disabled ablation branches contribute
// exactly zero and receive no gradient.
LossReport train_step(TrainerState& state, const PairBatch& batch);

void save_checkpoint(const TrainerState& state, const std::string& path);
std::unique_ptr<TrainerState> load_checkpoint(const std::string& path);

struct TrainResult {
  std::vector<LossReport> history;  // one record per executed step
  std::string checkpoint_path;      // empty when out_dir is empty
  std::string metrics_path;
};

// Full loop over `config.steps` steps with seeded sampling and augmentation.
// When out_dir is non-empty, writes metrics.tsv, periodic checkpoints and a
// final checkpoint.bin. `resume_from` continues a previous run.
TrainResult train(const TrainConfig& config, const CorpusManifest& manifest,
                  const std::string& out_dir = "",
                  const std::string& resume_from = "");

// Table-4 baseline: the same backbone trained as a plain binary classifier.
TrainResult baseline_train(TrainConfig config, const CorpusManifest& manifest,
                           const std::string& out_dir = "");

std::string format_metrics_line(std::int64_t step, const LossReport& r);

}  // namespace ucf
