#pragma once

// shared micro-scale fixtures for trainer/evalkit tests

#include <filesystem>

#include "ucf/synth.hpp"
#include "ucf/trainer.hpp"

namespace fixtures {

inline ucf::SynthSpec micro_corpus_spec() {
  ucf::SynthSpec s;
  s.n_real = 24;
  s.methods = {"A", "B"};
  s.n_per_method = 12;
  s.image_size = 16;
  s.seed = 77;
  return s;
}

inline ucf::TrainConfig micro_train_config() {
  ucf::TrainConfig c;
  c.backbone.input_size = 16;
  c.backbone.width = 0.2;
  c.backbone.fingerprint_channels = 8;
  c.backbone.content_channels = 8;
  c.batch_pairs = 4;
  c.steps = 3;
  c.seed = 5;
  c.augment = false;
  c.checkpoint_every = 2;
  return c;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("ucf_fix_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
