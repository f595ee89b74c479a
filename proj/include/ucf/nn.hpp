#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ucf/autograd.hpp"
#include "ucf/errors.hpp"
#include "ucf/rng.hpp"
#include "ucf/tensor.hpp"

namespace ucf::nn {

// Owns every learnable tensor and persistent buffer of a model, keyed by
// dotted path ("encoder.content.block0.conv.w"). The checkpoint format and
// the optimizer both iterate this store in registration order.
template <typename S>
class ParamStore {
 public:
  ag::Var<S> param(const std::string& name, Tensor<S> init) {
    if (index_.count(name))
      throw ValidationError("duplicate parameter name: " + name);
    auto v = ag::make_var(std::move(init), true);
    index_[name] = params_.size();
    params_.emplace_back(name, v);
    return v;
  }

  Tensor<S>* buffer(const std::string& name, Tensor<S> init) {
    if (buffer_index_.count(name))
      throw ValidationError("duplicate buffer name: " + name);
    buffers_.emplace_back(name,
                          std::make_unique<Tensor<S>>(std::move(init)));
    buffer_index_[name] = buffers_.size() - 1;
    return buffers_.back().second.get();
  }

  const std::vector<std::pair<std::string, ag::Var<S>>>& params() const {
    return params_;
  }
  const std::vector<std::pair<std::string, std::unique_ptr<Tensor<S>>>>&
  buffers() const {
    return buffers_;
  }

  ag::Var<S> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw NotFoundError("no parameter " + name);
    return params_[it->second].second;
  }

  Tensor<S>* find_buffer(const std::string& name) const {
    auto it = buffer_index_.find(name);
    if (it == buffer_index_.end()) throw NotFoundError("no buffer " + name);
    return buffers_[it->second].second.get();
  }

  std::vector<ag::Var<S>> with_prefix(const std::string& prefix) const {
    std::vector<ag::Var<S>> out;
    for (const auto& [name, v] : params_)
      if (name.rfind(prefix, 0) == 0) out.push_back(v);
    return out;
  }

  std::int64_t total_parameters() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : params_) n += v->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : params_)
      if (!v->grad.data.empty())
        std::fill(v->grad.data.begin(), v->grad.data.end(), S(0));
  }

 private:
  std::vector<std::pair<std::string, ag::Var<S>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor<S>>>> buffers_;
  std::unordered_map<std::string, std::size_t> buffer_index_;
};

template <typename S>
Tensor<S> he_normal(std::vector<int> shape, std::int64_t fan_in, Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<S>(rng.normal(0.0, stddev));
  return t;
}

template <typename S>
struct Conv2d {
  ag::Var<S> w, b;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(ParamStore<S>& ps, const std::string& prefix, int in_c, int out_c,
         int k, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = ps.param(prefix + ".w",
                 he_normal<S>({out_c, in_c, k, k},
                              static_cast<std::int64_t>(in_c) * k * k, rng));
    b = ps.param(prefix + ".b", Tensor<S>::zeros({out_c}));
  }

  ag::Var<S> operator()(const ag::Var<S>& x) const {
    return ag::conv2d(x, w, b, stride, pad);
  }
};

template <typename S>
struct DepthwiseConv2d {
  ag::Var<S> w, b;
  int stride = 1, pad = 1;

  DepthwiseConv2d() = default;
  DepthwiseConv2d(ParamStore<S>& ps, const std::string& prefix, int channels,
                  int k, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = ps.param(prefix + ".w",
                 he_normal<S>({channels, 1, k, k},
                              static_cast<std::int64_t>(k) * k, rng));
    b = ps.param(prefix + ".b", Tensor<S>::zeros({channels}));
  }

  ag::Var<S> operator()(const ag::Var<S>& x) const {
    return ag::depthwise_conv2d(x, w, b, stride, pad);
  }
};

template <typename S>
struct BatchNorm2d {
  ag::Var<S> gamma, beta;
  Tensor<S>* running_mean = nullptr;
  Tensor<S>* running_var = nullptr;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<S>& ps, const std::string& prefix, int channels) {
    gamma = ps.param(prefix + ".gamma", Tensor<S>::full({channels}, S(1)));
    beta = ps.param(prefix + ".beta", Tensor<S>::zeros({channels}));
    running_mean = ps.buffer(prefix + ".running_mean",
                             Tensor<S>::zeros({channels}));
    running_var =
        ps.buffer(prefix + ".running_var", Tensor<S>::full({channels}, S(1)));
  }

  ag::Var<S> operator()(const ag::Var<S>& x, bool training) const {
    return ag::batchnorm2d(x, gamma, beta, *running_mean, *running_var,
                           training);
  }
};

template <typename S>
struct Linear {
  ag::Var<S> w, b;

  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& prefix, int in_dim, int out_dim,
         Rng& rng) {
    w = ps.param(prefix + ".w", he_normal<S>({in_dim, out_dim}, in_dim, rng));
    b = ps.param(prefix + ".b", Tensor<S>::zeros({out_dim}));
  }

  ag::Var<S> operator()(const ag::Var<S>& x) const {
    return ag::linear(x, w, b);
  }
};

// Adam with bias correction. Moment buffers are exposed for checkpointing.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ag::Var<S>> params, S lr, S beta1 = S(0.9),
       S beta2 = S(0.999), S eps = S(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Tensor<S>::zeros(p->value.shape));
      v_.push_back(Tensor<S>::zeros(p->value.shape));
    }
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = params_[pi];
      if (p->grad.data.empty()) continue;
      for (std::int64_t i = 0; i < p->value.numel(); ++i) {
        const S g = p->grad[i];
        m_[pi][i] = beta1_ * m_[pi][i] + (S(1) - beta1_) * g;
        v_[pi][i] = beta2_ * v_[pi][i] + (S(1) - beta2_) * g * g;
        const S mhat = m_[pi][i] / bc1;
        const S vhat = v_[pi][i] / bc2;
        p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_)
      if (!p->grad.data.empty())
        std::fill(p->grad.data.begin(), p->grad.data.end(), S(0));
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  std::vector<Tensor<S>>& moment1() { return m_; }
  std::vector<Tensor<S>>& moment2() { return v_; }
  S learning_rate() const { return lr_; }

 private:
  std::vector<ag::Var<S>> params_;
  S lr_ = S(1e-3), beta1_ = S(0.9), beta2_ = S(0.999), eps_ = S(1e-8);
  std::int64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace ucf::nn
