#pragma once

// Test-only finite-difference oracle. Rebuilds the scalar graph from the
// leaves' current values for every probe, so it stays independent of the
// backward implementations it verifies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ucf/autograd.hpp"
#include "ucf/rng.hpp"
#include "ucf/tensor.hpp"

namespace gradcheck {

using BuildFn = std::function<ucf::ag::Var<double>()>;

// max over all leaf elements of |analytic - central difference| scaled by
// max(1, |analytic|, |numeric|)
inline double max_error(const std::vector<ucf::ag::Var<double>>& leaves,
                        const BuildFn& build, double eps = 1e-5) {
  for (const auto& l : leaves) l->grad = ucf::Tensor<double>();
  auto root = build();
  ucf::ag::backward(root);

  std::vector<ucf::Tensor<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves)
    analytic.push_back(l->grad.data.empty()
                           ? ucf::Tensor<double>::zeros(l->value.shape)
                           : l->grad);

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& l = leaves[li];
    for (std::int64_t i = 0; i < l->value.numel(); ++i) {
      const double orig = l->value[i];
      l->value[i] = orig + eps;
      const double fp = build()->value[0];
      l->value[i] = orig - eps;
      const double fm = build()->value[0];
      l->value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double ana = analytic[li][i];
      const double err = std::abs(numeric - ana) /
                         std::max({1.0, std::abs(numeric), std::abs(ana)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline ucf::Tensor<double> random_tensor(std::vector<int> shape, ucf::Rng& rng,
                                         double lo = -1.0, double hi = 1.0) {
  ucf::Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform_real(lo, hi);
  return t;
}

}  // namespace gradcheck
