#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ucf/backbone.hpp"
#include "ucf/decoder.hpp"
#include "ucf/heads.hpp"
#include "ucf/nn.hpp"

namespace ucf {

// Everything needed to rebuild a model byte-for-byte: architecture, label
// vocabulary and the weight-init seed.
struct ModelSpec {
  BackboneConfig backbone;
  Fusion fusion = Fusion::kAdaIn;
  bool disentangle = true;  // false: plain single-trunk binary classifier
  std::vector<std::string> method_vocabulary = {"real"};
  std::uint64_t init_seed = 1;

  int n_method_classes() const {
    return static_cast<int>(method_vocabulary.size());
  }
  void validate() const;
};

// Runtime model. The disentangled variant owns the dual encoder, the
// conditional decoder and both heads; the plain variant owns one trunk and
// the binary head. Parameter keys: encoder.content.*, encoder.fingerprint.*,
// decoder.*, head.common.*, head.specific.* (plain: encoder.whole.*,
// head.common.*).
class Model {
 public:
  explicit Model(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  bool disentangled() const { return spec_.disentangle; }
  nn::ParamStore<float>& store() { return store_; }
  const nn::ParamStore<float>& store() const { return store_; }

  const DualEncoder<float>& encoder() const;
  const ConditionalDecoder<float>& decoder() const;
  const Trunk<float>& baseline_trunk() const;
  const MlpHead<float>& head_common() const { return head_common_; }
  const MlpHead<float>& head_specific() const;

  // fake-probability per image; evaluation mode, only the common branch is
  // consulted (the plain variant scores its single head)
  std::vector<double> detect(const Tensor<float>& images) const;

  struct PooledFeatures {
    Tensor<float> specific;  // (N, C_f/2)
    Tensor<float> common;    // (N, C_f/2)
    Tensor<float> content;   // (N, C_c)
  };
  // evaluation-mode pooled latents; requires the disentangled variant
  PooledFeatures pooled_features(const Tensor<float>& images) const;

 private:
  ModelSpec spec_;
  nn::ParamStore<float> store_;
  std::unique_ptr<DualEncoder<float>> encoder_;
  std::unique_ptr<ConditionalDecoder<float>> decoder_;
  std::unique_ptr<Trunk<float>> baseline_trunk_;
  MlpHead<float> head_common_;
  MlpHead<float> head_specific_;
};

}  // namespace ucf
