#include "ucf/model.hpp"

#include <algorithm>
#include <cmath>

#include "ucf/errors.hpp"

namespace ucf {

void ModelSpec::validate() const {
  backbone.validate();
  if (method_vocabulary.empty() || method_vocabulary[0] != "real")
    throw ValidationError("model: vocabulary must start with 'real'");
  if (disentangle && method_vocabulary.size() < 2)
    throw ValidationError(
        "model: disentangled variant needs at least one forgery method in the "
        "vocabulary");
}

Model::Model(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng(spec_.init_seed);
  HeadConfig common_cfg;
  common_cfg.n_classes = 2;
  if (spec_.disentangle) {
    encoder_ = std::make_unique<DualEncoder<float>>(spec_.backbone, store_,
                                                    rng);
    decoder_ = std::make_unique<ConditionalDecoder<float>>(
        spec_.backbone, spec_.fusion, store_, rng);
    head_common_ = MlpHead<float>(common_cfg,
                                  spec_.backbone.fingerprint_channels / 2,
                                  store_, "head.common", rng);
    HeadConfig specific_cfg = common_cfg;  // same architecture, own weights
    specific_cfg.n_classes = spec_.n_method_classes();
    head_specific_ = MlpHead<float>(specific_cfg,
                                    spec_.backbone.fingerprint_channels / 2,
                                    store_, "head.specific", rng);
  } else {
    baseline_trunk_ = make_trunk<float>(
        spec_.backbone, spec_.backbone.fingerprint_channels, store_,
        "encoder.whole", rng);
    head_common_ = MlpHead<float>(common_cfg,
                                  spec_.backbone.fingerprint_channels, store_,
                                  "head.common", rng);
  }
}

const DualEncoder<float>& Model::encoder() const {
  if (!encoder_) throw ValidationError("model: plain variant has no encoder");
  return *encoder_;
}

const ConditionalDecoder<float>& Model::decoder() const {
  if (!decoder_) throw ValidationError("model: plain variant has no decoder");
  return *decoder_;
}

const Trunk<float>& Model::baseline_trunk() const {
  if (!baseline_trunk_)
    throw ValidationError("model: disentangled variant has no plain trunk");
  return *baseline_trunk_;
}

const MlpHead<float>& Model::head_specific() const {
  if (!spec_.disentangle)
    throw ValidationError("model: plain variant has no specific head");
  return head_specific_;
}

namespace {

// softmax fake-probability from 2-class logits
void append_fake_probs(const Tensor<float>& logits,
                       std::vector<double>* out) {
  const int n = logits.dim(0);
  for (int i = 0; i < n; ++i) {
    const double a = logits[i * 2 + 0];
    const double b = logits[i * 2 + 1];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    out->push_back(eb / (ea + eb));
  }
}

constexpr int kEvalChunk = 64;

}  // namespace

std::vector<double> Model::detect(const Tensor<float>& images) const {
  if (images.ndim() != 4 || images.dim(1) != 3)
    throw ShapeError("detect: want (N,3,S,S) images, got " +
                     shape_str(images.shape));
  const int n = images.dim(0);
  std::vector<double> scores;
  scores.reserve(n);
  const std::int64_t stride =
      static_cast<std::int64_t>(3) * images.dim(2) * images.dim(3);
  for (int n0 = 0; n0 < n; n0 += kEvalChunk) {
    const int g = std::min(kEvalChunk, n - n0);
    Tensor<float> chunk({g, 3, images.dim(2), images.dim(3)});
    std::copy_n(images.ptr() + n0 * stride, g * stride, chunk.ptr());
    auto x = ag::constant(std::move(chunk));
    ag::Var<float> logits;
    if (spec_.disentangle) {
      auto bundle = encoder_->encode(x, /*training=*/false);
      logits = head_common_.forward(bundle.f_common);
    } else {
      logits = head_common_.forward(baseline_trunk_->forward(x, false));
    }
    append_fake_probs(logits->value, &scores);
  }
  return scores;
}

Model::PooledFeatures Model::pooled_features(const Tensor<float>& images) const {
  if (!spec_.disentangle)
    throw ValidationError(
        "pooled_features: plain variant has no factorized features");
  if (images.ndim() != 4 || images.dim(1) != 3)
    throw ShapeError("pooled_features: want (N,3,S,S) images");
  const int n = images.dim(0);
  const int half = spec_.backbone.fingerprint_channels / 2;
  const int cc = spec_.backbone.content_channels;
  PooledFeatures out;
  out.specific = Tensor<float>({n, half});
  out.common = Tensor<float>({n, half});
  out.content = Tensor<float>({n, cc});
  const std::int64_t stride =
      static_cast<std::int64_t>(3) * images.dim(2) * images.dim(3);
  for (int n0 = 0; n0 < n; n0 += kEvalChunk) {
    const int g = std::min(kEvalChunk, n - n0);
    Tensor<float> chunk({g, 3, images.dim(2), images.dim(3)});
    std::copy_n(images.ptr() + n0 * stride, g * stride, chunk.ptr());
    auto x = ag::constant(std::move(chunk));
    auto bundle = encoder_->encode(x, false);
    auto ps = ag::spatial_mean(bundle.f_specific);
    auto pc = ag::spatial_mean(bundle.f_common);
    auto pct = ag::spatial_mean(bundle.content);
    std::copy_n(ps->value.ptr(), static_cast<std::int64_t>(g) * half,
                out.specific.ptr() + static_cast<std::int64_t>(n0) * half);
    std::copy_n(pc->value.ptr(), static_cast<std::int64_t>(g) * half,
                out.common.ptr() + static_cast<std::int64_t>(n0) * half);
    std::copy_n(pct->value.ptr(), static_cast<std::int64_t>(g) * cc,
                out.content.ptr() + static_cast<std::int64_t>(n0) * cc);
  }
  return out;
}

}  // namespace ucf
