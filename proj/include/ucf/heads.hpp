#pragma once

#include <string>
#include <vector>

#include "ucf/errors.hpp"
#include "ucf/nn.hpp"

namespace ucf {

struct HeadConfig {
  std::vector<int> hidden_dims = {256, 256};
  int n_classes = 2;

  void validate() const {
    if (n_classes < 2) throw ValidationError("head: n_classes must be >= 2");
    for (int d : hidden_dims)
      if (d < 1) throw ValidationError("head: hidden dims must be >= 1");
  }
};

// Global-average pool followed by an MLP. H_c and H_s are two instances of
// this class built from the same HeadConfig shape with independent weights.
template <typename S>
class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(const HeadConfig& cfg, int in_channels, nn::ParamStore<S>& ps,
          const std::string& prefix, Rng& rng) {
    cfg.validate();
    int in_dim = in_channels;
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
      layers_.emplace_back(ps, prefix + ".fc" + std::to_string(i), in_dim,
                           cfg.hidden_dims[i], rng);
      in_dim = cfg.hidden_dims[i];
    }
    out_ = nn::Linear<S>(ps, prefix + ".out", in_dim, cfg.n_classes, rng);
  }

  // feature map (N,C,h,w) -> logits (N,n_classes)
  ag::Var<S> forward(const ag::Var<S>& feature_map) const {
    return forward_pooled(ag::spatial_mean(feature_map));
  }

  // pooled features (N,C) -> logits
  ag::Var<S> forward_pooled(const ag::Var<S>& pooled) const {
    auto h = pooled;
    for (const auto& l : layers_) h = ag::relu(l(h));
    return out_(h);
  }

 private:
  std::vector<nn::Linear<S>> layers_;
  nn::Linear<S> out_;
};

}  // namespace ucf
