#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ucf/backbone.hpp"
#include "ucf/errors.hpp"
#include "ucf/nn.hpp"

namespace ucf {

enum class Fusion { kAdaIn, kLinearAdd };
enum class CrossTarget { kContentDonor, kFingerprintDonor };

constexpr double kAdainEps = 1e-5;

// Re-statistics the content map so each channel carries the fingerprint's
// per-channel mean and std. Statistics are population moments over spatial
// positions, variance epsilon-guarded.
template <typename S>
ag::Var<S> adain(const ag::Var<S>& content, const ag::Var<S>& fingerprint) {
  const auto& cs = content->value.shape;
  const auto& fs = fingerprint->value.shape;
  if (cs.size() != 4 || fs.size() != 4)
    throw ShapeError("adain: want NCHW inputs");
  if (cs[0] != fs[0] || cs[1] != fs[1])
    throw ShapeError("adain: channel mismatch, content " + shape_str(cs) +
                     " vs fingerprint " + shape_str(fs));
  auto mu_c = ag::spatial_mean(content);
  auto centered = ag::broadcast_nc(content, mu_c, ag::BcOp::Sub);
  auto var_c = ag::spatial_mean(ag::square(centered));
  auto sig_c = ag::sqrt_safe(ag::add_scalar(var_c, S(kAdainEps)));
  auto mu_f = ag::spatial_mean(fingerprint);
  auto f_centered = ag::broadcast_nc(fingerprint, mu_f, ag::BcOp::Sub);
  auto var_f = ag::spatial_mean(ag::square(f_centered));
  auto sig_f = ag::sqrt_safe(ag::add_scalar(var_f, S(kAdainEps)));
  auto normalized = ag::broadcast_nc(centered, ag::recip(sig_c), ag::BcOp::Mul);
  auto styled = ag::broadcast_nc(normalized, sig_f, ag::BcOp::Mul);
  return ag::broadcast_nc(styled, mu_f, ag::BcOp::Add);
}

// Decoder: fingerprint-conditioned reconstruction back to image space.
// The fingerprint enters twice, at the entry and again before the middle
// stage, each time through its own 1x1 projection. Fusion is AdaIN by
// default; the linear_add variant swaps every injection for element-wise
// addition. Conv stages are norm-free so injected statistics survive.
template <typename S>
class ConditionalDecoder {
 public:
  ConditionalDecoder(const BackboneConfig& cfg, Fusion fusion,
                     nn::ParamStore<S>& ps, Rng& rng)
      : cfg_(cfg), fusion_(fusion) {
    const int cc = cfg.content_channels;
    const int cf = cfg.fingerprint_channels;
    // channel plan: one conv stage at base resolution plus one per upsample,
    // widths halving as resolution grows
    stage_channels_ = {cc};
    for (int i = 0; i < kUpsamples + 1; ++i)
      stage_channels_.push_back(std::max(4, stage_channels_.back() / 2));
    mid_stage_ = (kUpsamples + 1) / 2;  // stage index receiving the second
                                        // injection

    entry_proj_ = nn::Conv2d<S>(ps, "decoder.entry_proj", cf, cc, 1, 1, 0, rng);
    mid_proj_ = nn::Conv2d<S>(ps, "decoder.mid_proj", cf,
                              stage_channels_[mid_stage_], 1, 1, 0, rng);
    for (int k = 0; k < kUpsamples + 1; ++k)
      stages_.emplace_back(ps, "decoder.stage" + std::to_string(k),
                           stage_channels_[k], stage_channels_[k + 1], 3, 1, 1,
                           rng);
    out_conv_ = nn::Conv2d<S>(ps, "decoder.out", stage_channels_.back(), 3, 3,
                              1, 1, rng);
  }

  // fingerprint (N,C_f,h,w), content (N,C_c,h,w) -> image (N,3,8h,8w)
  ag::Var<S> decode(const ag::Var<S>& fingerprint,
                    const ag::Var<S>& content) const {
    const auto& fs = fingerprint->value.shape;
    const auto& cs = content->value.shape;
    const int m = cfg_.map_size();
    if (fs.size() != 4 || fs[1] != cfg_.fingerprint_channels || fs[2] != m ||
        fs[3] != m)
      throw ShapeError("decode: fingerprint shape " + shape_str(fs) +
                       " does not match config");
    if (cs.size() != 4 || cs[1] != cfg_.content_channels || cs[2] != m ||
        cs[3] != m || cs[0] != fs[0])
      throw ShapeError("decode: content shape " + shape_str(cs) +
                       " does not match config");

    auto h = fuse(content, entry_proj_(fingerprint), 0);
    h = ag::relu(stages_[0](h));
    for (int up = 0; up < kUpsamples; ++up) {
      h = ag::upsample_nearest2(h);
      const int k = up + 1;
      if (k == mid_stage_) h = fuse(h, mid_proj_(fingerprint), k);
      h = ag::relu(stages_[k](h));
    }
    return ag::sigmoid(out_conv_(h));
  }

  Fusion fusion() const { return fusion_; }

 private:
  static constexpr int kUpsamples = 3;

  // AdaIN only consumes per-channel statistics, so the projected fingerprint
  // can stay at its native resolution; additive fusion needs spatial match.
  ag::Var<S> fuse(const ag::Var<S>& features, const ag::Var<S>& projected,
                  int upsamples_done) const {
    if (fusion_ == Fusion::kAdaIn) return adain(features, projected);
    auto p = projected;
    for (int i = 0; i < upsamples_done; ++i) p = ag::upsample_nearest2(p);
    return ag::add(features, p);
  }

  BackboneConfig cfg_;
  Fusion fusion_;
  std::vector<int> stage_channels_;
  int mid_stage_ = 0;
  nn::Conv2d<S> entry_proj_, mid_proj_, out_conv_;
  std::vector<nn::Conv2d<S>> stages_;
};

// The four decodes of the recombination module: self-reconstructions and
// fingerprint/content swaps of an image pair.
template <typename S>
struct ReconstructionSet {
  ag::Var<S> self_0;   // D(f0, c0)
  ag::Var<S> self_1;   // D(f1, c1)
  ag::Var<S> cross_0;  // D(f1, c0)
  ag::Var<S> cross_1;  // D(f0, c1)
};

template <typename S>
ReconstructionSet<S> recombine_and_decode(const ConditionalDecoder<S>& dec,
                                          const LatentBundle<S>& b0,
                                          const LatentBundle<S>& b1) {
  return {dec.decode(b0.fingerprint, b0.content),
          dec.decode(b1.fingerprint, b1.content),
          dec.decode(b1.fingerprint, b0.content),
          dec.decode(b0.fingerprint, b1.content)};
}

}  // namespace ucf
