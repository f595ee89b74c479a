#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ucf/config.hpp"
#include "ucf/rng.hpp"
#include "ucf/tensor.hpp"

namespace ucf {

// stable 64-bit hash used for split assignment and sub-seed derivation
std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull);

struct SynthSpec {
  int n_real = 100;
  std::vector<std::string> methods;
  int n_per_method = 100;
  int image_size = 64;
  double common_artifact_strength = 0.5;
  double specific_artifact_strength = 0.5;
  std::vector<std::string> held_out_methods;
  std::uint64_t seed = 1;
  double test_fraction = 0.25;  // split share for non-held-out samples

  void validate() const;
};

SynthSpec synth_spec_from_kv(const KvConfig& kv);
KvConfig synth_spec_to_kv(const SynthSpec& spec);

struct SampleRecord {
  std::string sample_id;
  std::string source_id;
  int y = 0;        // 1 = fake, 0 = real
  int y_prime = 0;  // method vocabulary index, 0 = real
  std::string split;
};

struct CorpusManifest {
  enum class Source { kSynthetic, kDirectory };

  std::vector<SampleRecord> samples;
  std::vector<std::string> method_vocabulary;  // index 0 is always "real"
  Source source = Source::kSynthetic;
  SynthSpec synth_spec;  // populated when source == kSynthetic
  std::string root;      // populated when source == kDirectory

  void validate() const;
  std::vector<int> split_indices(const std::string& split) const;
  // reals plus fakes of one method, all splits preserved
  CorpusManifest restrict_to_method(const std::string& method) const;
  // methods that appear in the test split but never in train
  std::vector<std::string> held_out_methods() const;
};

void save_manifest(const CorpusManifest& manifest, const std::string& path);
CorpusManifest load_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// synthetic rendering
// ---------------------------------------------------------------------------

// Deterministic image synthesis from a SynthSpec. Reals are procedural face
// proxies: smooth background/face blobs plus per-image broadband noise whose
// level varies sample to sample, so high-frequency energy alone does not
// separate real from fake. Every fake adds one fixed high-frequency template
// (the common artifact) and its method's smooth low-frequency pattern; the
// method patterns are orthogonalized against the common template and each
// other.
class SyntheticRenderer {
 public:
  explicit SyntheticRenderer(const SynthSpec& spec);

  Tensor<float> render(const SampleRecord& rec) const;
  Tensor<float> render_base(const SampleRecord& rec) const;

  const Tensor<float>& common_template() const { return common_; }
  // method_index is the vocabulary index (>= 1)
  const Tensor<float>& specific_template(int method_index) const;
  const SynthSpec& spec() const { return spec_; }

 private:
  Tensor<float> base_image(int real_index, double noise_var_cut) const;
  double fake_noise_var_cut() const;

  SynthSpec spec_;
  Tensor<float> common_;
  std::vector<Tensor<float>> specific_;
};

CorpusManifest generate_synthetic_corpus(const SynthSpec& spec);

// Renders the corpus to root/<split>/<class>/<name>.png plus manifest.txt.
void write_corpus_to_dir(const CorpusManifest& manifest,
                         const std::string& root);

// root/<split>/<class_dir>/*.{png,jpg,jpeg}; "real" class maps to index 0,
// remaining vocabulary is sorted directory names.
CorpusManifest scan_dataset_dir(const std::string& root);

// ---------------------------------------------------------------------------
// image access and batch sampling
// ---------------------------------------------------------------------------

class ImageProvider {
 public:
  virtual ~ImageProvider() = default;
  // (3,S,S) float in [0,1]; cached after first load
  virtual Tensor<float> image(const SampleRecord& rec) = 0;
};

std::unique_ptr<ImageProvider> make_provider(const CorpusManifest& manifest);

struct PairBatch {
  Tensor<float> fake_images;  // (B,3,S,S)
  Tensor<float> real_images;  // (B,3,S,S)
  std::vector<int> y;         // length 2B, fakes first
  std::vector<int> y_prime;   // length 2B
  std::vector<int> pair_index;  // fake row -> paired real row
  std::vector<std::string> fake_ids, real_ids;

  int pairs() const { return static_cast<int>(fake_ids.size()); }
};

PairBatch sample_pair_batch(const CorpusManifest& manifest,
                            ImageProvider& provider, int batch_pairs,
                            Rng& rng);

// ---------------------------------------------------------------------------
// augmentations
// ---------------------------------------------------------------------------

struct AugConfig {
  double flip_prob = 0.5;
  double compress_prob = 0.3;
  int compress_quality_min = 30;
  int compress_quality_max = 90;
  double brightness_contrast_prob = 0.3;
  double brightness_delta = 0.2;
  double contrast_delta = 0.2;

  static AugConfig none() {
    AugConfig a;
    a.flip_prob = a.compress_prob = a.brightness_contrast_prob = 0.0;
    return a;
  }

  bool enabled() const {
    return flip_prob > 0 || compress_prob > 0 || brightness_contrast_prob > 0;
  }

  void validate() const;
};

// output clamps to [0,1] and keeps the input shape
Tensor<float> apply_augmentations(const Tensor<float>& img,
                                  const AugConfig& cfg, Rng& rng);

}  // namespace ucf
