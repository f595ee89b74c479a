#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ucf/model.hpp"
#include "ucf/synth.hpp"

namespace ucf {

// Rank-based (Mann-Whitney) AUC with ties counted one half. Labels: 1 is
// the positive class. Throws UndefinedMetricError on single-class input.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalReport {
  std::string corpus_id;
  std::string split;
  int n_samples = 0;
  double auc_common = 0.0;
  // probe AUCs keyed by feature kind ("specific", "common", "whole",
  // "content"), present when probes were requested
  std::map<std::string, double> probe_aucs;
};

// assemble a report from per-sample scores aligned with the split's manifest
// order (detect() output, or an external scorer in tests)
EvalReport report_from_scores(const CorpusManifest& manifest,
                              const std::string& split,
                              const std::vector<double>& scores);

// detect() over every sample of the split, frame-level AUC on the fake
// probability. scores_out, when given, receives (sample_id, score) rows in
// manifest order.
EvalReport evaluate(
    const Model& model, const CorpusManifest& manifest, ImageProvider& provider,
    const std::string& split,
    std::vector<std::pair<std::string, double>>* scores_out = nullptr);

enum class FeatureKind { kSpecific, kCommon, kWhole, kContent };

FeatureKind feature_kind_from_string(const std::string& s);
std::string to_string(FeatureKind kind);

// Post-hoc logistic probe on frozen pooled features: fit on the train split,
// report AUC on the test split. `eval_method`, when non-empty, restricts the
// test side to reals plus that method's fakes. Deterministic (zero-init
// full-batch optimization).
double probe_features(const Model& model, const CorpusManifest& manifest,
                      ImageProvider& provider, FeatureKind kind,
                      const std::string& eval_method = "");

// One row per sample: sample_id, y, y_prime, pooled f_specific dims, pooled
// f_common dims, pooled content dims. Tab-separated with a header line.
void export_features(const Model& model, const CorpusManifest& manifest,
                     ImageProvider& provider, const std::string& split,
                     const std::string& out_path);

void write_eval_report(const EvalReport& report, const std::string& path);

}  // namespace ucf
