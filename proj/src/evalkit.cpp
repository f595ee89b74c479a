#include "ucf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ucf/errors.hpp"

namespace ucf {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("auc: scores/labels length mismatch");
  const int n = static_cast<int>(scores.size());
  std::int64_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1)
      throw ValidationError("auc: labels must be 0 or 1");
    n_pos += l;
  }
  const std::int64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetricError(
        "auc: need at least one positive and one negative label");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  // average ranks across ties, accumulate positive ranks
  double pos_rank_sum = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + j) / 2.0 + 1.0;
    for (int k = i; k <= j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  return (pos_rank_sum -
          static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) /
              2.0) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

Tensor<float> stack_split_images(const CorpusManifest& manifest,
                                 ImageProvider& provider,
                                 const std::vector<int>& idx) {
  if (idx.empty()) throw InsufficientDataError("empty split");
  const auto first = provider.image(manifest.samples[idx[0]]);
  const int size = first.dim(1);
  Tensor<float> out({static_cast<int>(idx.size()), 3, size, size});
  const std::int64_t stride = first.numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto img = provider.image(manifest.samples[idx[i]]);
    if (img.shape != first.shape)
      throw ShapeError("corpus images have inconsistent sizes");
    std::copy_n(img.ptr(), stride,
                out.ptr() + static_cast<std::int64_t>(i) * stride);
  }
  return out;
}

}  // namespace

EvalReport report_from_scores(const CorpusManifest& manifest,
                              const std::string& split,
                              const std::vector<double>& scores) {
  const auto idx = manifest.split_indices(split);
  if (idx.size() != scores.size())
    throw ShapeError("report_from_scores: got " +
                     std::to_string(scores.size()) + " scores for a split of " +
                     std::to_string(idx.size()));
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (int i : idx) labels.push_back(manifest.samples[i].y);

  EvalReport report;
  report.corpus_id = manifest.root.empty() ? "synthetic" : manifest.root;
  report.split = split;
  report.n_samples = static_cast<int>(idx.size());
  report.auc_common = auc(scores, labels);
  return report;
}

EvalReport evaluate(const Model& model, const CorpusManifest& manifest,
                    ImageProvider& provider, const std::string& split,
                    std::vector<std::pair<std::string, double>>* scores_out) {
  manifest.validate();
  const auto idx = manifest.split_indices(split);
  if (idx.empty())
    throw InsufficientDataError("evaluate: split '" + split + "' is empty");
  const auto images = stack_split_images(manifest, provider, idx);
  const auto scores = model.detect(images);
  if (scores_out) {
    scores_out->clear();
    for (std::size_t i = 0; i < idx.size(); ++i)
      scores_out->emplace_back(manifest.samples[idx[i]].sample_id, scores[i]);
  }
  return report_from_scores(manifest, split, scores);
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "specific") return FeatureKind::kSpecific;
  if (s == "common") return FeatureKind::kCommon;
  if (s == "whole") return FeatureKind::kWhole;
  if (s == "content") return FeatureKind::kContent;
  throw ValidationError("unknown feature kind '" + s +
                        "' (want specific, common, whole or content)");
}

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kSpecific: return "specific";
    case FeatureKind::kCommon: return "common";
    case FeatureKind::kWhole: return "whole";
    case FeatureKind::kContent: return "content";
  }
  return "?";
}

namespace {

// rows (n, d) of the requested feature kind
std::vector<std::vector<double>> feature_rows(const Model& model,
                                              const CorpusManifest& manifest,
                                              ImageProvider& provider,
                                              const std::vector<int>& idx,
                                              FeatureKind kind) {
  const auto images = stack_split_images(manifest, provider, idx);
  const auto feats = model.pooled_features(images);
  const int n = static_cast<int>(idx.size());
  std::vector<std::vector<double>> rows(n);
  auto append = [&](const Tensor<float>& src, int row, std::vector<double>* out) {
    const int d = src.dim(1);
    for (int j = 0; j < d; ++j)
      out->push_back(src[static_cast<std::int64_t>(row) * d + j]);
  };
  for (int i = 0; i < n; ++i) {
    switch (kind) {
      case FeatureKind::kSpecific: append(feats.specific, i, &rows[i]); break;
      case FeatureKind::kCommon: append(feats.common, i, &rows[i]); break;
      case FeatureKind::kWhole:
        append(feats.specific, i, &rows[i]);
        append(feats.common, i, &rows[i]);
        break;
      case FeatureKind::kContent: append(feats.content, i, &rows[i]); break;
    }
  }
  return rows;
}

// full-batch logistic regression on standardized features; zero init makes
// the fit deterministic
struct LogisticProbe {
  std::vector<double> mean, scale, w;
  double b = 0.0;

  void fit(const std::vector<std::vector<double>>& rows,
           const std::vector<int>& labels) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size());
    mean.assign(d, 0.0);
    scale.assign(d, 0.0);
    for (const auto& r : rows)
      for (int j = 0; j < d; ++j) mean[j] += r[j];
    for (auto& m : mean) m /= n;
    for (const auto& r : rows)
      for (int j = 0; j < d; ++j) {
        const double c = r[j] - mean[j];
        scale[j] += c * c;
      }
    int degenerate = 0;
    for (auto& s : scale) {
      s = std::sqrt(s / n);
      if (s < 1e-12) {
        s = 1.0;
        ++degenerate;
      }
    }
    if (degenerate == d)
      throw ProbeFailureError(
          "probe: all feature dimensions have zero variance");

    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        z[i][j] = (rows[i][j] - mean[j]) / scale[j];

    w.assign(d, 0.0);
    b = 0.0;
    const double lr = 0.5, l2 = 1e-4;
    const int iters = 400;
    std::vector<double> gw(d);
    for (int it = 0; it < iters; ++it) {
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (int i = 0; i < n; ++i) {
        double logit = b;
        for (int j = 0; j < d; ++j) logit += w[j] * z[i][j];
        const double p = 1.0 / (1.0 + std::exp(-logit));
        const double err = p - labels[i];
        for (int j = 0; j < d; ++j) gw[j] += err * z[i][j];
        gb += err;
      }
      for (int j = 0; j < d; ++j)
        w[j] -= lr * (gw[j] / n + l2 * w[j]);
      b -= lr * gb / n;
    }
  }

  double score(const std::vector<double>& row) const {
    double logit = b;
    for (std::size_t j = 0; j < row.size(); ++j)
      logit += w[j] * (row[j] - mean[j]) / scale[j];
    return 1.0 / (1.0 + std::exp(-logit));
  }
};

}  // namespace

double probe_features(const Model& model, const CorpusManifest& manifest,
                      ImageProvider& provider, FeatureKind kind,
                      const std::string& eval_method) {
  manifest.validate();
  const auto train_idx = manifest.split_indices("train");
  if (train_idx.empty())
    throw InsufficientDataError("probe: train split is empty");

  CorpusManifest eval_manifest =
      eval_method.empty() ? manifest : manifest.restrict_to_method(eval_method);
  const auto test_idx = eval_manifest.split_indices("test");
  if (test_idx.empty())
    throw InsufficientDataError("probe: test split is empty");

  const auto train_rows =
      feature_rows(model, manifest, provider, train_idx, kind);
  std::vector<int> train_labels;
  for (int i : train_idx) train_labels.push_back(manifest.samples[i].y);

  LogisticProbe probe;
  probe.fit(train_rows, train_labels);

  const auto test_rows =
      feature_rows(model, eval_manifest, provider, test_idx, kind);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    scores.push_back(probe.score(test_rows[i]));
    labels.push_back(eval_manifest.samples[test_idx[i]].y);
  }
  return auc(scores, labels);
}

void export_features(const Model& model, const CorpusManifest& manifest,
                     ImageProvider& provider, const std::string& split,
                     const std::string& out_path) {
  manifest.validate();
  const auto idx = manifest.split_indices(split);
  if (idx.empty())
    throw InsufficientDataError("export_features: split '" + split +
                                "' is empty");
  const auto images = stack_split_images(manifest, provider, idx);
  const auto feats = model.pooled_features(images);

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write features to " + out_path);
  out << "sample_id\ty\ty_prime";
  for (int j = 0; j < feats.specific.dim(1); ++j) out << "\tf_specific_" << j;
  for (int j = 0; j < feats.common.dim(1); ++j) out << "\tf_common_" << j;
  for (int j = 0; j < feats.content.dim(1); ++j) out << "\tcontent_" << j;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = manifest.samples[idx[i]];
    out << s.sample_id << '\t' << s.y << '\t' << s.y_prime;
    auto dump = [&](const Tensor<float>& t) {
      const int d = t.dim(1);
      for (int j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof(buf), "%.7g",
                      t[static_cast<std::int64_t>(i) * d + j]);
        out << '\t' << buf;
      }
    };
    dump(feats.specific);
    dump(feats.common);
    dump(feats.content);
    out << "\n";
  }
  if (!out) throw IoError("short write on " + out_path);
}

void write_eval_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report to " + path);
  char buf[64];
  out << "corpus = " << report.corpus_id << "\n";
  out << "split = " << report.split << "\n";
  out << "n_samples = " << report.n_samples << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", report.auc_common);
  out << "auc_common = " << buf << "\n";
  for (const auto& [kind, value] : report.probe_aucs) {
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    out << "auc_probe_" << kind << " = " << buf << "\n";
  }
}

}  // namespace ucf
