#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ucf/autograd.hpp"
#include "ucf/decoder.hpp"
#include "ucf/errors.hpp"
#include "ucf/log.hpp"
#include "ucf/rng.hpp"

namespace ucf {

struct LossWeights {
  double lambda1 = 0.1;  // specific-classification weight
  double lambda2 = 0.3;  // reconstruction weight
  double lambda3 = 0.05; // contrastive weight
  double margin = 3.0;   // contrastive margin

  void validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!ok(lambda1) || !ok(lambda2) || !ok(lambda3) || !ok(margin))
      throw ValidationError(
          "loss weights: lambda1..3 and margin must be finite and >= 0");
  }
};

struct LossReport {
  double ce_common = 0.0;
  double ce_specific = 0.0;
  double reconstruction = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
};

inline LossReport compose_report(double ce_common, double ce_specific,
                                 double reconstruction, double contrastive,
                                 const LossWeights& w) {
  const struct {
    const char* name;
    double v;
  } comps[] = {{"ce_common", ce_common},
               {"ce_specific", ce_specific},
               {"reconstruction", reconstruction},
               {"contrastive", contrastive}};
  for (const auto& c : comps)
    if (!std::isfinite(c.v))
      throw DivergenceError(std::string("loss component '") + c.name +
                            "' is not finite");
  LossReport r;
  r.ce_common = ce_common;
  r.ce_specific = ce_specific;
  r.reconstruction = reconstruction;
  r.contrastive = contrastive;
  r.total = ce_common + w.lambda1 * ce_specific + w.lambda2 * reconstruction +
            w.lambda3 * contrastive;
  return r;
}

// ---------------------------------------------------------------------------
// classification losses
// ---------------------------------------------------------------------------

// binary fake/real cross-entropy on 2-class logits
template <typename S>
ag::Var<S> common_ce_loss(const ag::Var<S>& logits,
                          const std::vector<int>& y) {
  const auto& shp = logits->value.shape;
  if (shp.size() != 2 || shp[1] != 2)
    throw ShapeError("common_ce_loss: want (N,2) logits, got " +
                     shape_str(shp));
  if (static_cast<int>(y.size()) != shp[0])
    throw ShapeError("common_ce_loss: labels length " +
                     std::to_string(y.size()) + " vs batch " +
                     std::to_string(shp[0]));
  return ag::softmax_cross_entropy(logits, y);
}

// method classification over the full vocabulary (real at index 0)
template <typename S>
ag::Var<S> specific_ce_loss(const ag::Var<S>& logits,
                            const std::vector<int>& y_prime) {
  const auto& shp = logits->value.shape;
  if (shp.size() != 2)
    throw ShapeError("specific_ce_loss: want (N,K) logits");
  if (static_cast<int>(y_prime.size()) != shp[0])
    throw ShapeError("specific_ce_loss: labels length mismatch");
  for (int lbl : y_prime)
    if (lbl < 0 || lbl >= shp[1])
      throw ValidationError("specific_ce_loss: method label " +
                            std::to_string(lbl) + " outside vocabulary of " +
                            std::to_string(shp[1]) + " classes");
  return ag::softmax_cross_entropy(logits, y_prime);
}

// ---------------------------------------------------------------------------
// contrastive regularization
// ---------------------------------------------------------------------------

// aligned (anchor, positive, negative) pooled embeddings, one row each
template <typename S>
struct TripletSet {
  Tensor<S> anchors;    // (T, C)
  Tensor<S> positives;  // (T, C)
  Tensor<S> negatives;  // (T, C)

  int size() const { return anchors.data.empty() ? 0 : anchors.shape[0]; }
};

struct TripletIndices {
  std::vector<int> anchor, positive, negative;

  int size() const { return static_cast<int>(anchor.size()); }
  bool empty() const { return anchor.empty(); }
};

// mean over triplets of max(||a-p|| - ||a-n|| + margin, 0)
template <typename S>
ag::Var<S> contrastive_loss_graph(const ag::Var<S>& anchors,
                                  const ag::Var<S>& positives,
                                  const ag::Var<S>& negatives, S margin) {
  ag::check_same_shape(anchors, positives, "contrastive");
  ag::check_same_shape(anchors, negatives, "contrastive");
  auto d_ap =
      ag::sqrt_safe(ag::row_sum(ag::square(ag::sub(anchors, positives))));
  auto d_an =
      ag::sqrt_safe(ag::row_sum(ag::square(ag::sub(anchors, negatives))));
  return ag::mean_all(ag::relu(ag::add_scalar(ag::sub(d_ap, d_an), margin)));
}

template <typename S>
S contrastive_loss(const TripletSet<S>& triplets, S margin) {
  if (triplets.size() == 0) {
    log_warn("contrastive_loss: empty triplet set, contributing 0");
    return S(0);
  }
  auto loss = contrastive_loss_graph(ag::constant(triplets.anchors),
                                     ag::constant(triplets.positives),
                                     ag::constant(triplets.negatives), margin);
  return loss->value[0];
}

// Select triplet row indices from batch labels. One triplet per eligible
// fake anchor; positives/negatives drawn uniformly from their eligibility
// sets. y: 1 = fake, 0 = real. y_prime: 0 = real, >= 1 = method id.
inline std::pair<TripletIndices, TripletIndices> select_triplet_indices(
    const std::vector<int>& y, const std::vector<int>& y_prime, Rng& rng) {
  if (y.size() != y_prime.size())
    throw ShapeError("select_triplet_indices: label length mismatch");
  const int n = static_cast<int>(y.size());
  std::vector<int> fakes, reals;
  for (int i = 0; i < n; ++i) (y[i] == 1 ? fakes : reals).push_back(i);

  TripletIndices common, specific;
  // common: anchor fake, positive any other fake, negative any real
  if (fakes.size() >= 2 && !reals.empty()) {
    for (int a : fakes) {
      int p = a;
      while (p == a)
        p = fakes[rng.uniform(fakes.size())];
      const int neg = reals[rng.uniform(reals.size())];
      common.anchor.push_back(a);
      common.positive.push_back(p);
      common.negative.push_back(neg);
    }
  }
  // specific: anchor fake, positive same-method fake, negative a fake of a
  // different method, falling back to a real
  for (int a : fakes) {
    std::vector<int> same, other;
    for (int j : fakes) {
      if (j == a) continue;
      (y_prime[j] == y_prime[a] ? same : other).push_back(j);
    }
    const std::vector<int>& neg_pool = !other.empty() ? other : reals;
    if (same.empty() || neg_pool.empty()) continue;
    specific.anchor.push_back(a);
    specific.positive.push_back(same[rng.uniform(same.size())]);
    specific.negative.push_back(neg_pool[rng.uniform(neg_pool.size())]);
  }
  return {common, specific};
}

namespace detail {

template <typename S>
TripletSet<S> gather_triplets(const Tensor<S>& pooled,
                              const TripletIndices& idx) {
  TripletSet<S> out;
  if (idx.empty()) return out;
  const int c = pooled.shape[1];
  const int t = idx.size();
  out.anchors = Tensor<S>({t, c});
  out.positives = Tensor<S>({t, c});
  out.negatives = Tensor<S>({t, c});
  for (int r = 0; r < t; ++r)
    for (int j = 0; j < c; ++j) {
      out.anchors[r * c + j] = pooled[idx.anchor[r] * c + j];
      out.positives[r * c + j] = pooled[idx.positive[r] * c + j];
      out.negatives[r * c + j] = pooled[idx.negative[r] * c + j];
    }
  return out;
}

}  // namespace detail

// Batch-level triplet construction on pooled embeddings (spatial global
// average of f_common / f_specific respectively).
template <typename S>
std::pair<TripletSet<S>, TripletSet<S>> build_triplets(
    const Tensor<S>& pooled_common, const Tensor<S>& pooled_specific,
    const std::vector<int>& y, const std::vector<int>& y_prime, Rng& rng) {
  if (pooled_common.shape.size() != 2 || pooled_specific.shape.size() != 2)
    throw ShapeError("build_triplets: want (N,C) pooled embeddings");
  auto [common_idx, specific_idx] = select_triplet_indices(y, y_prime, rng);
  if (common_idx.empty())
    log_warn("build_triplets: no eligible common triplets in batch");
  if (specific_idx.empty())
    log_warn("build_triplets: no eligible specific triplets in batch");
  return {detail::gather_triplets(pooled_common, common_idx),
          detail::gather_triplets(pooled_specific, specific_idx)};
}

// ---------------------------------------------------------------------------
// reconstruction
// ---------------------------------------------------------------------------

// L_rec = self terms + cross terms, every term a mean-L1 against its target.
// With the content-donor reading, D(f1,c0) is pulled toward x0 and D(f0,c1)
// toward x1; the fingerprint-donor flag swaps the two cross targets.
template <typename S>
ag::Var<S> reconstruction_loss_graph(const ag::Var<S>& x0, const ag::Var<S>& x1,
                                     const ReconstructionSet<S>& recs,
                                     CrossTarget cross_target) {
  auto loss = ag::add(ag::l1_mean(recs.self_0, x0),
                      ag::l1_mean(recs.self_1, x1));
  if (cross_target == CrossTarget::kContentDonor) {
    loss = ag::add(loss, ag::l1_mean(recs.cross_0, x0));
    loss = ag::add(loss, ag::l1_mean(recs.cross_1, x1));
  } else {
    loss = ag::add(loss, ag::l1_mean(recs.cross_0, x1));
    loss = ag::add(loss, ag::l1_mean(recs.cross_1, x0));
  }
  return loss;
}

template <typename S>
S reconstruction_loss(const Tensor<S>& x0, const Tensor<S>& x1,
                      const Tensor<S>& self_0, const Tensor<S>& self_1,
                      const Tensor<S>& cross_0, const Tensor<S>& cross_1,
                      CrossTarget cross_target = CrossTarget::kContentDonor) {
  ReconstructionSet<S> recs{ag::constant(self_0), ag::constant(self_1),
                            ag::constant(cross_0), ag::constant(cross_1)};
  return reconstruction_loss_graph(ag::constant(x0), ag::constant(x1), recs,
                                   cross_target)
      ->value[0];
}

// ---------------------------------------------------------------------------
// total
// ---------------------------------------------------------------------------

// Weighted sum on the graph; the scalar LossReport is derived from the same
// component values.
template <typename S>
std::pair<ag::Var<S>, LossReport> total_loss_graph(
    const ag::Var<S>& ce_common, const ag::Var<S>& ce_specific,
    const ag::Var<S>& reconstruction, const ag::Var<S>& contrastive,
    const LossWeights& w) {
  w.validate();
  auto total = ag::add(
      ag::add(ce_common, ag::scalar_mul(ce_specific, S(w.lambda1))),
      ag::add(ag::scalar_mul(reconstruction, S(w.lambda2)),
              ag::scalar_mul(contrastive, S(w.lambda3))));
  LossReport report = compose_report(
      static_cast<double>(ce_common->value[0]),
      static_cast<double>(ce_specific->value[0]),
      static_cast<double>(reconstruction->value[0]),
      static_cast<double>(contrastive->value[0]), w);
  return {total, report};
}

inline LossReport total_loss(double ce_common, double ce_specific,
                             double reconstruction, double contrastive,
                             const LossWeights& w) {
  w.validate();
  return compose_report(ce_common, ce_specific, reconstruction, contrastive,
                        w);
}

}  // namespace ucf
