#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ucf/errors.hpp"
#include "ucf/nn.hpp"

namespace ucf {

struct BackboneConfig {
  std::string name = "tiny_cnn";
  int input_size = 64;
  int fingerprint_channels = 64;  // C_f, split channel-wise into halves
  int content_channels = 64;      // C_c
  double width = 1.0;             // multiplier on trunk widths

  static constexpr int kDownsample = 8;

  int map_size() const { return input_size / kDownsample; }

  void validate() const {
    if (fingerprint_channels < 2 || fingerprint_channels % 2 != 0)
      throw ValidationError("backbone: fingerprint_channels must be even, got " +
                            std::to_string(fingerprint_channels));
    if (content_channels < 1)
      throw ValidationError("backbone: content_channels must be >= 1");
    if (input_size < 16 || input_size % kDownsample != 0)
      throw ValidationError(
          "backbone: input_size must be >= 16 and divisible by " +
          std::to_string(kDownsample));
    if (!(width > 0.0)) throw ValidationError("backbone: width must be > 0");
  }
};

// Encoder trunk: image (N,3,S,S) -> feature map (N,out_channels,S/8,S/8).
template <typename S>
class Trunk {
 public:
  virtual ~Trunk() = default;
  virtual ag::Var<S> forward(const ag::Var<S>& x, bool training) const = 0;
};

namespace detail {

inline int scaled(int base, double width) {
  return std::max(4, static_cast<int>(std::lround(base * width)));
}

}  // namespace detail

// Plain CNN: four conv blocks (strides 2,2,2,1), batch norm + ReLU.
template <typename S>
class TinyCnnTrunk final : public Trunk<S> {
 public:
  TinyCnnTrunk(const BackboneConfig& cfg, int out_channels,
               nn::ParamStore<S>& ps, const std::string& prefix, Rng& rng) {
    const int c1 = detail::scaled(32, cfg.width);
    const int c2 = detail::scaled(64, cfg.width);
    const int c3 = detail::scaled(128, cfg.width);
    const int chans[5] = {3, c1, c2, c3, out_channels};
    const int strides[4] = {2, 2, 2, 1};
    for (int i = 0; i < 4; ++i) {
      const std::string p = prefix + ".block" + std::to_string(i);
      convs_.emplace_back(ps, p + ".conv", chans[i], chans[i + 1], 3,
                          strides[i], 1, rng);
      norms_.emplace_back(ps, p + ".bn", chans[i + 1]);
    }
  }

  ag::Var<S> forward(const ag::Var<S>& x, bool training) const override {
    ag::Var<S> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i)
      h = ag::relu(norms_[i](convs_[i](h), training));
    return h;
  }

 private:
  std::vector<nn::Conv2d<S>> convs_;
  std::vector<nn::BatchNorm2d<S>> norms_;
};

// Reduced-width Xception flavor: separable convolutions with residual
// shortcuts, downsampling by strided depthwise steps.
template <typename S>
class XceptionStyleTrunk final : public Trunk<S> {
 public:
  XceptionStyleTrunk(const BackboneConfig& cfg, int out_channels,
                     nn::ParamStore<S>& ps, const std::string& prefix,
                     Rng& rng) {
    const int c1 = detail::scaled(32, cfg.width);
    const int c2 = detail::scaled(64, cfg.width);
    const int c3 = detail::scaled(128, cfg.width);
    stem_ = nn::Conv2d<S>(ps, prefix + ".stem.conv", 3, c1, 3, 2, 1, rng);
    stem_bn_ = nn::BatchNorm2d<S>(ps, prefix + ".stem.bn", c1);
    blocks_.emplace_back(ps, prefix + ".block0", c1, c2, rng);
    blocks_.emplace_back(ps, prefix + ".block1", c2, c3, rng);
    exit_dw_ = nn::DepthwiseConv2d<S>(ps, prefix + ".exit.dw", c3, 3, 1, 1, rng);
    exit_pw_ = nn::Conv2d<S>(ps, prefix + ".exit.pw", c3, out_channels, 1, 1, 0,
                             rng);
    exit_bn_ = nn::BatchNorm2d<S>(ps, prefix + ".exit.bn", out_channels);
  }

  ag::Var<S> forward(const ag::Var<S>& x, bool training) const override {
    auto h = ag::relu(stem_bn_(stem_(x), training));
    for (const auto& b : blocks_) h = b.forward(h, training);
    return ag::relu(exit_bn_(exit_pw_(exit_dw_(h)), training));
  }

 private:
  struct SepBlock {
    nn::DepthwiseConv2d<S> dw1, dw2;
    nn::Conv2d<S> pw1, pw2, shortcut;
    nn::BatchNorm2d<S> bn1, bn2, bn_sc;

    SepBlock(nn::ParamStore<S>& ps, const std::string& p, int in_c, int out_c,
             Rng& rng)
        : dw1(ps, p + ".dw1", in_c, 3, 1, 1, rng),
          dw2(ps, p + ".dw2", out_c, 3, 2, 1, rng),
          pw1(ps, p + ".pw1", in_c, out_c, 1, 1, 0, rng),
          pw2(ps, p + ".pw2", out_c, out_c, 1, 1, 0, rng),
          shortcut(ps, p + ".shortcut", in_c, out_c, 1, 2, 0, rng),
          bn1(ps, p + ".bn1", out_c),
          bn2(ps, p + ".bn2", out_c),
          bn_sc(ps, p + ".bn_sc", out_c) {}

    ag::Var<S> forward(const ag::Var<S>& x, bool training) const {
      auto h = ag::relu(bn1(pw1(dw1(x)), training));
      h = bn2(pw2(dw2(h)), training);
      auto sc = bn_sc(shortcut(x), training);
      return ag::relu(ag::add(h, sc));
    }
  };

  nn::Conv2d<S> stem_;
  nn::BatchNorm2d<S> stem_bn_;
  std::vector<SepBlock> blocks_;
  nn::DepthwiseConv2d<S> exit_dw_;
  nn::Conv2d<S> exit_pw_;
  nn::BatchNorm2d<S> exit_bn_;
};

template <typename S>
using TrunkBuilder = std::function<std::unique_ptr<Trunk<S>>(
    const BackboneConfig&, int out_channels, nn::ParamStore<S>&,
    const std::string& prefix, Rng&)>;

template <typename S>
std::map<std::string, TrunkBuilder<S>>& backbone_registry() {
  static std::map<std::string, TrunkBuilder<S>> reg = {
      {"tiny_cnn",
       [](const BackboneConfig& cfg, int out_c, nn::ParamStore<S>& ps,
          const std::string& prefix, Rng& rng) -> std::unique_ptr<Trunk<S>> {
         return std::make_unique<TinyCnnTrunk<S>>(cfg, out_c, ps, prefix, rng);
       }},
      {"xception_style",
       [](const BackboneConfig& cfg, int out_c, nn::ParamStore<S>& ps,
          const std::string& prefix, Rng& rng) -> std::unique_ptr<Trunk<S>> {
         return std::make_unique<XceptionStyleTrunk<S>>(cfg, out_c, ps, prefix,
                                                        rng);
       }}};
  return reg;
}

template <typename S>
std::unique_ptr<Trunk<S>> make_trunk(const BackboneConfig& cfg,
                                     int out_channels, nn::ParamStore<S>& ps,
                                     const std::string& prefix, Rng& rng) {
  auto& reg = backbone_registry<S>();
  auto it = reg.find(cfg.name);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, v] : reg) known += (known.empty() ? "" : ", ") + k;
    throw ValidationError("backbone: unknown name '" + cfg.name +
                          "' (registered: " + known + ")");
  }
  return it->second(cfg, out_channels, ps, prefix, rng);
}

// Per-image factorization into (specific fingerprint, common fingerprint,
// content). `fingerprint` keeps the unsplit map the decoder consumes.
template <typename S>
struct LatentBundle {
  ag::Var<S> f_specific;
  ag::Var<S> f_common;
  ag::Var<S> content;
  ag::Var<S> fingerprint;
};

// Content and fingerprint encoders share one topology but never parameters;
// the fingerprint map is halved channel-wise into (specific, common).
template <typename S>
class DualEncoder {
 public:
  DualEncoder(const BackboneConfig& cfg, nn::ParamStore<S>& ps, Rng& rng)
      : cfg_(cfg),
        content_(make_trunk<S>(cfg, cfg.content_channels, ps,
                               "encoder.content", rng)),
        fingerprint_(make_trunk<S>(cfg, cfg.fingerprint_channels, ps,
                                   "encoder.fingerprint", rng)) {}

  LatentBundle<S> encode(const ag::Var<S>& x, bool training) const {
    const auto& shp = x->value.shape;
    if (shp.size() != 4 || shp[1] != 3 || shp[2] != cfg_.input_size ||
        shp[3] != cfg_.input_size)
      throw ShapeError("encode: expected (N,3," +
                       std::to_string(cfg_.input_size) + "," +
                       std::to_string(cfg_.input_size) + "), got " +
                       shape_str(shp));
    auto content = content_->forward(x, training);
    auto fp = fingerprint_->forward(x, training);
    const int half = cfg_.fingerprint_channels / 2;
    return {ag::channel_slice(fp, 0, half),
            ag::channel_slice(fp, half, cfg_.fingerprint_channels), content,
            fp};
  }

  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::unique_ptr<Trunk<S>> content_;
  std::unique_ptr<Trunk<S>> fingerprint_;
};

}  // namespace ucf
