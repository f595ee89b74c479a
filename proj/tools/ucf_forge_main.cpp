#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ucf/evalkit.hpp"
#include "ucf/log.hpp"
#include "ucf/synth.hpp"
#include "ucf/threading.hpp"
#include "ucf/trainer.hpp"

namespace fs = std::filesystem;
using namespace ucf;

namespace {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// every run leaves a record of what produced its output directory
class RunRecord {
 public:
  RunRecord(std::string command, std::string out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)) {
    started_ = timestamp_now();
  }

  void set(const std::string& key, const std::string& value) {
    extra_.set(key, value);
  }
  void add_artifact(const std::string& path) { artifacts_.push_back(path); }

  void finish() {
    fs::create_directories(out_dir_);
    KvConfig kv;
    kv.set("command", command_);
    for (const auto& [k, v] : extra_.entries()) kv.set(k, v);
    kv.set("out_dir", out_dir_);
    kv.set("started_at", started_);
    kv.set("finished_at", timestamp_now());
    std::string arts;
    for (const auto& a : artifacts_) arts += (arts.empty() ? "" : ",") + a;
    kv.set("artifacts", arts);
    kv.save((fs::path(out_dir_) / "run_record.txt").string());
  }

 private:
  std::string command_, out_dir_, started_;
  KvConfig extra_;
  std::vector<std::string> artifacts_;
};

struct TrainCliOverrides {
  std::string ablation, fusion, cross_target;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int steps = 0;

  void apply(TrainConfig* cfg) const {
    if (!ablation.empty()) cfg->ablation = AblationFlags::from_code(ablation);
    if (!fusion.empty()) {
      if (fusion == "adain") {
        cfg->decoder_fusion = Fusion::kAdaIn;
      } else if (fusion == "linear_add") {
        cfg->decoder_fusion = Fusion::kLinearAdd;
      } else {
        throw ValidationError("--fusion must be adain or linear_add");
      }
    }
    if (!cross_target.empty()) {
      if (cross_target == "content_donor") {
        cfg->cross_target = CrossTarget::kContentDonor;
      } else if (cross_target == "fingerprint_donor") {
        cfg->cross_target = CrossTarget::kFingerprintDonor;
      } else {
        throw ValidationError(
            "--cross-target must be content_donor or fingerprint_donor");
      }
    }
    if (seed_set) cfg->seed = seed;
    if (steps > 0) cfg->steps = steps;
  }
};

TrainConfig load_train_config(const std::string& config_path,
                              const TrainCliOverrides& overrides) {
  TrainConfig cfg = config_path.empty()
                        ? TrainConfig{}
                        : TrainConfig::from_kv(KvConfig::parse_file(config_path));
  overrides.apply(&cfg);
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 std::uint64_t seed, bool seed_set) {
  SynthSpec spec = synth_spec_from_kv(KvConfig::parse_file(spec_path));
  if (seed_set) spec.seed = seed;
  spec.validate();
  RunRecord record("gen-data", out_dir);
  record.set("spec", spec_path);
  record.set("seed", std::to_string(spec.seed));
  const CorpusManifest manifest = generate_synthetic_corpus(spec);
  write_corpus_to_dir(manifest, out_dir);
  record.add_artifact("manifest.txt");
  record.finish();
  std::printf("gen-data: wrote %zu samples (%zu methods) under %s\n",
              manifest.samples.size(), manifest.method_vocabulary.size() - 1,
              out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume,
              const TrainCliOverrides& overrides) {
  const TrainConfig cfg = load_train_config(config_path, overrides);
  const CorpusManifest manifest = scan_dataset_dir(data_dir);
  RunRecord record("train", out_dir);
  record.set("config", config_path.empty() ? "<defaults>" : config_path);
  record.set("data", data_dir);
  record.set("seed", std::to_string(cfg.seed));
  record.set("ablation", cfg.ablation.code());
  fs::create_directories(out_dir);
  cfg.to_kv().save((fs::path(out_dir) / "resolved_config.cfg").string());

  const TrainResult result = train(cfg, manifest, out_dir, resume);
  record.add_artifact("checkpoint.bin");
  record.add_artifact("metrics.tsv");
  record.add_artifact("resolved_config.cfg");
  record.finish();
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    std::printf("train: done, final total loss %.6f (ce_common %.6f)\n",
                last.total, last.ce_common);
  }
  std::printf("train: checkpoint at %s\n", result.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, std::vector<std::string> data_dirs,
             const std::string& split_name, const std::string& method,
             const std::string& probes_csv, const std::string& out_dir) {
  auto state = load_checkpoint(checkpoint);
  const Model& model = *state->model;
  RunRecord record("eval", out_dir);
  record.set("checkpoint", checkpoint);

  int failures = 0;
  int corpus_index = 0;
  for (const auto& dir : data_dirs) {
    ++corpus_index;
    try {
      CorpusManifest manifest = scan_dataset_dir(dir);
      auto provider = make_provider(manifest);
      CorpusManifest eval_manifest =
          method.empty() ? manifest : manifest.restrict_to_method(method);
      std::vector<std::pair<std::string, double>> scores;
      EvalReport report =
          evaluate(model, eval_manifest, *provider, split_name, &scores);
      if (!probes_csv.empty()) {
        for (const auto& kind_name : split(probes_csv, ',')) {
          const FeatureKind kind = feature_kind_from_string(kind_name);
          report.probe_aucs[kind_name] =
              probe_features(model, manifest, *provider, kind, method);
        }
      }
      std::printf("eval[%s%s]: n=%d auc_common=%.4f", dir.c_str(),
                  method.empty() ? "" : ("/" + method).c_str(),
                  report.n_samples, report.auc_common);
      for (const auto& [k, v] : report.probe_aucs)
        std::printf(" probe_%s=%.4f", k.c_str(), v);
      std::printf("\n");
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string tag = "corpus" + std::to_string(corpus_index);
        write_eval_report(report,
                          (fs::path(out_dir) / (tag + "_report.txt")).string());
        std::ofstream sf(fs::path(out_dir) / (tag + "_scores.tsv"));
        for (const auto& [id, score] : scores) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.7g", score);
          sf << id << '\t' << buf << '\n';
        }
        record.add_artifact(tag + "_report.txt");
        record.add_artifact(tag + "_scores.tsv");
      }
    } catch (const std::exception& e) {
      ++failures;
      log_warn(std::string("eval: corpus '") + dir + "' failed: " + e.what());
    }
  }
  if (!out_dir.empty()) record.finish();
  return failures == 0 ? 0 : 1;
}

int cmd_export_features(const std::string& checkpoint,
                        const std::string& data_dir, const std::string& split,
                        const std::string& out_file) {
  auto state = load_checkpoint(checkpoint);
  const CorpusManifest manifest = scan_dataset_dir(data_dir);
  auto provider = make_provider(manifest);
  export_features(*state->model, manifest, *provider, split, out_file);
  std::printf("export-features: wrote %s\n", out_file.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, int n_seeds, bool fusion_compare,
               const TrainCliOverrides& overrides) {
  TrainConfig base = load_train_config(config_path, overrides);
  const CorpusManifest manifest = scan_dataset_dir(data_dir);
  const auto held_out = manifest.held_out_methods();
  if (held_out.empty())
    throw ValidationError(
        "ablate: corpus has no held-out method (a method present only in the "
        "test split is required)");
  const std::string target_method = held_out.front();

  RunRecord record("ablate", out_dir);
  record.set("data", data_dir);
  record.set("held_out_method", target_method);
  fs::create_directories(out_dir);

  struct Variant {
    std::string name, ablation;
    Fusion fusion;
  };
  std::vector<Variant> variants = {{"baseline", "none", Fusion::kAdaIn},
                                   {"D", "D", Fusion::kAdaIn},
                                   {"DM", "DM", Fusion::kAdaIn},
                                   {"DMC", "DMC", Fusion::kAdaIn}};
  if (fusion_compare)
    variants.push_back({"DMC_linear", "DMC", Fusion::kLinearAdd});

  std::ofstream summary(fs::path(out_dir) / "summary.tsv");
  summary << "variant\tseed\tauc_held_out\n";
  std::map<std::string, double> mean_auc;
  for (const auto& variant : variants) {
    double acc = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
      TrainConfig cfg = base;
      cfg.ablation = AblationFlags::from_code(variant.ablation);
      cfg.decoder_fusion = variant.fusion;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      const std::string run_dir =
          (fs::path(out_dir) / (variant.name + "_seed" + std::to_string(s)))
              .string();
      train(cfg, manifest, run_dir);
      auto state = load_checkpoint(
          (fs::path(run_dir) / "checkpoint.bin").string());
      auto provider = make_provider(manifest);
      const CorpusManifest held = manifest.restrict_to_method(target_method);
      const EvalReport report =
          evaluate(*state->model, held, *provider, "test");
      acc += report.auc_common;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", report.auc_common);
      summary << variant.name << '\t' << cfg.seed << '\t' << buf << '\n';
      summary.flush();
      std::printf("ablate: %s seed %llu -> held-out auc %.4f\n",
                  variant.name.c_str(),
                  static_cast<unsigned long long>(cfg.seed),
                  report.auc_common);
    }
    mean_auc[variant.name] = acc / n_seeds;
  }
  std::printf("\nvariant means over %d seed(s), held-out method %s:\n",
              n_seeds, target_method.c_str());
  for (const auto& variant : variants)
    std::printf("  %-10s %.4f\n", variant.name.c_str(),
                mean_auc[variant.name]);
  record.add_artifact("summary.tsv");
  record.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_threading();
  CLI::App app{"ucf-forge: multi-task disentanglement toolkit for forgery "
               "detection"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_spec, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--spec", gen_spec, "synthesis spec file")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "seed override");

  // train
  auto* tr = app.add_subcommand("train", "train a detector");
  std::string tr_config, tr_data, tr_out, tr_resume;
  TrainCliOverrides tr_over;
  tr->add_option("--config", tr_config, "train config file");
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");
  tr->add_option("--ablation", tr_over.ablation,
                 "ablation row: none, D, DM or DMC");
  tr->add_option("--fusion", tr_over.fusion, "adain or linear_add");
  tr->add_option("--cross-target", tr_over.cross_target,
                 "content_donor or fingerprint_donor");
  tr->add_option("--steps", tr_over.steps, "step count override");
  auto* tr_seed_opt = tr->add_option("--seed", tr_over.seed, "seed override");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_split = "test", ev_method, ev_probe, ev_out;
  std::vector<std::string> ev_data;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directories")->required();
  ev->add_option("--split", ev_split, "split to evaluate");
  ev->add_option("--method", ev_method, "restrict to one forgery method");
  ev->add_option("--probe", ev_probe,
                 "comma list of probes: specific,common,whole,content");
  ev->add_option("--out", ev_out, "output directory for reports");

  // export-features
  auto* ex = app.add_subcommand("export-features",
                                "export pooled latent features");
  std::string ex_ckpt, ex_data, ex_split = "test", ex_out;
  ex->add_option("--checkpoint", ex_ckpt, "checkpoint file")->required();
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--split", ex_split, "split to export");
  ex->add_option("--out", ex_out, "output file")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "run the ablation matrix");
  std::string ab_config, ab_data, ab_out;
  int ab_seeds = 3;
  bool ab_fusion_compare = false;
  TrainCliOverrides ab_over;
  ab->add_option("--config", ab_config, "train config file");
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--seeds", ab_seeds, "seeds per variant");
  ab->add_flag("--fusion-compare", ab_fusion_compare,
               "add the linear_add fusion row");
  ab->add_option("--steps", ab_over.steps, "step count override");
  auto* ab_seed_opt = ab->add_option("--seed", ab_over.seed, "base seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_spec, gen_out, gen_seed, !gen_seed_opt->empty());
    if (tr->parsed()) {
      tr_over.seed_set = !tr_seed_opt->empty();
      return cmd_train(tr_config, tr_data, tr_out, tr_resume, tr_over);
    }
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_data, ev_split, ev_method, ev_probe, ev_out);
    if (ex->parsed())
      return cmd_export_features(ex_ckpt, ex_data, ex_split, ex_out);
    if (ab->parsed()) {
      ab_over.seed_set = !ab_seed_opt->empty();
      return cmd_ablate(ab_config, ab_data, ab_out, ab_seeds,
                        ab_fusion_compare, ab_over);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
