#include "ucf/trainer.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ucf/log.hpp"

namespace fs = std::filesystem;

namespace ucf {

AblationFlags AblationFlags::from_code(const std::string& code) {
  AblationFlags f;
  if (code == "none") {
    f.disentangle = f.multitask = f.contrastive = false;
  } else if (code == "D") {
    f.disentangle = true;
    f.multitask = f.contrastive = false;
  } else if (code == "DM") {
    f.disentangle = f.multitask = true;
    f.contrastive = false;
  } else if (code == "DMC") {
    f.disentangle = f.multitask = f.contrastive = true;
  } else {
    throw ValidationError("ablation: unknown code '" + code +
                          "' (want none, D, DM or DMC)");
  }
  return f;
}

void TrainConfig::validate() const {
  backbone.validate();
  weights.validate();
  ablation.validate();
  aug.validate();
  if (!(learning_rate > 0.0))
    throw ValidationError("train config: learning_rate must be > 0");
  if (steps < 1) throw ValidationError("train config: steps must be >= 1");
  if (batch_pairs < 2)
    throw ValidationError("train config: batch_pairs must be >= 2");
  if (checkpoint_every < 1)
    throw ValidationError("train config: checkpoint_every must be >= 1");
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.backbone.name = kv.get_str("backbone", c.backbone.name);
  c.backbone.input_size =
      static_cast<int>(kv.get_int("input_size", c.backbone.input_size));
  c.backbone.fingerprint_channels = static_cast<int>(
      kv.get_int("fingerprint_channels", c.backbone.fingerprint_channels));
  c.backbone.content_channels = static_cast<int>(
      kv.get_int("content_channels", c.backbone.content_channels));
  c.backbone.width = kv.get_double("width", c.backbone.width);
  c.weights.lambda1 = kv.get_double("lambda1", c.weights.lambda1);
  c.weights.lambda2 = kv.get_double("lambda2", c.weights.lambda2);
  c.weights.lambda3 = kv.get_double("lambda3", c.weights.lambda3);
  c.weights.margin = kv.get_double("margin", c.weights.margin);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.batch_pairs = static_cast<int>(kv.get_int("batch_pairs", c.batch_pairs));
  c.steps = static_cast<int>(kv.get_int("steps", c.steps));
  c.seed = kv.get_u64("seed", c.seed);
  c.ablation = AblationFlags::from_code(kv.get_str("ablation", "DMC"));
  const std::string fusion = kv.get_str("decoder_fusion", "adain");
  if (fusion == "adain") {
    c.decoder_fusion = Fusion::kAdaIn;
  } else if (fusion == "linear_add") {
    c.decoder_fusion = Fusion::kLinearAdd;
  } else {
    throw ValidationError("train config: decoder_fusion must be adain or "
                          "linear_add, got '" + fusion + "'");
  }
  const std::string ct = kv.get_str("cross_target", "content_donor");
  if (ct == "content_donor") {
    c.cross_target = CrossTarget::kContentDonor;
  } else if (ct == "fingerprint_donor") {
    c.cross_target = CrossTarget::kFingerprintDonor;
  } else {
    throw ValidationError("train config: cross_target must be content_donor "
                          "or fingerprint_donor, got '" + ct + "'");
  }
  c.augment = kv.get_bool("augment", c.augment);
  c.aug.flip_prob = kv.get_double("aug_flip_prob", c.aug.flip_prob);
  c.aug.compress_prob = kv.get_double("aug_compress_prob", c.aug.compress_prob);
  c.aug.compress_quality_min = static_cast<int>(
      kv.get_int("aug_compress_quality_min", c.aug.compress_quality_min));
  c.aug.compress_quality_max = static_cast<int>(
      kv.get_int("aug_compress_quality_max", c.aug.compress_quality_max));
  c.aug.brightness_contrast_prob = kv.get_double(
      "aug_brightness_contrast_prob", c.aug.brightness_contrast_prob);
  c.aug.brightness_delta =
      kv.get_double("aug_brightness_delta", c.aug.brightness_delta);
  c.aug.contrast_delta =
      kv.get_double("aug_contrast_delta", c.aug.contrast_delta);
  c.checkpoint_every =
      static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  c.validate();
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  char buf[64];
  auto put_d = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv.set(k, buf);
  };
  kv.set("backbone", backbone.name);
  kv.set("input_size", std::to_string(backbone.input_size));
  kv.set("fingerprint_channels",
         std::to_string(backbone.fingerprint_channels));
  kv.set("content_channels", std::to_string(backbone.content_channels));
  put_d("width", backbone.width);
  put_d("lambda1", weights.lambda1);
  put_d("lambda2", weights.lambda2);
  put_d("lambda3", weights.lambda3);
  put_d("margin", weights.margin);
  put_d("learning_rate", learning_rate);
  kv.set("batch_pairs", std::to_string(batch_pairs));
  kv.set("steps", std::to_string(steps));
  kv.set("seed", std::to_string(seed));
  kv.set("ablation", ablation.code());
  kv.set("decoder_fusion",
         decoder_fusion == Fusion::kAdaIn ? "adain" : "linear_add");
  kv.set("cross_target", cross_target == CrossTarget::kContentDonor
                             ? "content_donor"
                             : "fingerprint_donor");
  kv.set("augment", augment ? "true" : "false");
  put_d("aug_flip_prob", aug.flip_prob);
  put_d("aug_compress_prob", aug.compress_prob);
  kv.set("aug_compress_quality_min", std::to_string(aug.compress_quality_min));
  kv.set("aug_compress_quality_max", std::to_string(aug.compress_quality_max));
  put_d("aug_brightness_contrast_prob", aug.brightness_contrast_prob);
  put_d("aug_brightness_delta", aug.brightness_delta);
  put_d("aug_contrast_delta", aug.contrast_delta);
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  return kv;
}

std::unique_ptr<TrainerState> init_trainer(
    const TrainConfig& config, const std::vector<std::string>& vocabulary) {
  config.validate();
  auto state = std::make_unique<TrainerState>();
  state->config = config;

  ModelSpec spec;
  spec.backbone = config.backbone;
  spec.fusion = config.decoder_fusion;
  spec.disentangle = config.ablation.disentangle;
  spec.method_vocabulary = vocabulary;
  spec.init_seed = config.seed;
  state->model = std::make_unique<Model>(spec);

  std::vector<ag::Var<float>> params;
  for (const auto& [name, v] : state->model->store().params())
    params.push_back(v);
  state->optimizer = nn::Adam<float>(std::move(params),
                                     static_cast<float>(config.learning_rate));
  state->sampler_rng = Rng(fnv1a("sampler", config.seed));
  state->aug_rng = Rng(fnv1a("augment", config.seed));
  state->triplet_rng = Rng(fnv1a("triplet", config.seed));
  return state;
}

namespace {

ag::Var<float> zero_scalar() {
  return ag::constant(Tensor<float>({1}, {0.0f}));
}

// mean hinge over one triplet set drawn from pooled embeddings
ag::Var<float> triplet_term(const ag::Var<float>& pooled,
                            const TripletIndices& idx, float margin) {
  if (idx.empty()) return zero_scalar();
  return contrastive_loss_graph(ag::gather_rows(pooled, idx.anchor),
                                ag::gather_rows(pooled, idx.positive),
                                ag::gather_rows(pooled, idx.negative), margin);
}

}  // namespace

LossReport train_step(TrainerState& state, const PairBatch& batch) {
  Model& model = *state.model;
  const TrainConfig& cfg = state.config;
  const int pairs = batch.pairs();
  if (pairs < 1) throw ValidationError("train_step: empty batch");

  model.store().zero_grad();

  // stack fakes then reals into one batch so batch-norm sees the pair mix
  const int size = batch.fake_images.dim(2);
  Tensor<float> all({2 * pairs, 3, size, size});
  const std::int64_t half = batch.fake_images.numel();
  std::copy_n(batch.fake_images.ptr(), half, all.ptr());
  std::copy_n(batch.real_images.ptr(), half, all.ptr() + half);
  auto x_all = ag::constant(std::move(all));

  ag::Var<float> ce_c, ce_s, rec, con;
  if (!model.disentangled()) {
    auto features = model.baseline_trunk().forward(x_all, true);
    ce_c = common_ce_loss(model.head_common().forward(features), batch.y);
    ce_s = zero_scalar();
    rec = zero_scalar();
    con = zero_scalar();
  } else {
    auto bundle = model.encoder().encode(x_all, true);
    ce_c = common_ce_loss(model.head_common().forward(bundle.f_common),
                          batch.y);
    ce_s = cfg.ablation.multitask
               ? specific_ce_loss(
                     model.head_specific().forward(bundle.f_specific),
                     batch.y_prime)
               : zero_scalar();

    auto f0 = ag::batch_slice(bundle.fingerprint, 0, pairs);
    auto f1 = ag::batch_slice(bundle.fingerprint, pairs, 2 * pairs);
    auto c0 = ag::batch_slice(bundle.content, 0, pairs);
    auto c1 = ag::batch_slice(bundle.content, pairs, 2 * pairs);
    ReconstructionSet<float> recs{model.decoder().decode(f0, c0),
                                  model.decoder().decode(f1, c1),
                                  model.decoder().decode(f1, c0),
                                  model.decoder().decode(f0, c1)};
    auto x0 = ag::constant(batch.fake_images);
    auto x1 = ag::constant(batch.real_images);
    rec = reconstruction_loss_graph(x0, x1, recs, cfg.cross_target);

    if (cfg.ablation.contrastive) {
      auto [common_idx, specific_idx] =
          select_triplet_indices(batch.y, batch.y_prime, state.triplet_rng);
      const float margin = static_cast<float>(cfg.weights.margin);
      auto common_term = triplet_term(ag::spatial_mean(bundle.f_common),
                                      common_idx, margin);
      auto specific_term = triplet_term(ag::spatial_mean(bundle.f_specific),
                                        specific_idx, margin);
      con = ag::add(common_term, specific_term);
    } else {
      con = zero_scalar();
    }
  }

  auto [total, report] = total_loss_graph(ce_c, ce_s, rec, con, cfg.weights);
  ag::backward(total);
  state.optimizer.step();
  ++state.step;
  return report;
}

// ---------------------------------------------------------------------------
// checkpoint format: "UCFCKPT1" magic, little-endian sections
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[9] = "UCFCKPT1";

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_blob(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_blob(std::istream& is) {
  const std::uint64_t len = read_u64(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

void write_tensor(std::ostream& os, const Tensor<float>& t) {
  write_u64(os, t.shape.size());
  for (int d : t.shape) write_u64(os, static_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(t.ptr()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

Tensor<float> read_tensor(std::istream& is) {
  const std::uint64_t ndim = read_u64(is);
  std::vector<int> shape(ndim);
  for (auto& d : shape) d = static_cast<int>(read_u64(is));
  Tensor<float> t(shape);
  is.read(reinterpret_cast<char*>(t.ptr()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  return t;
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  rng.save(os);
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  std::istringstream is(s);
  Rng rng;
  rng.load(is);
  return rng;
}

}  // namespace

void save_checkpoint(const TrainerState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint to " + path);
  os.write(kMagic, 8);
  write_u64(os, 1);  // format version

  std::ostringstream cfg_text;
  state.config.to_kv().write(cfg_text);
  write_blob(os, cfg_text.str());

  std::string vocab;
  for (const auto& m : state.model->spec().method_vocabulary)
    vocab += (vocab.empty() ? "" : ",") + m;
  write_blob(os, vocab);

  write_u64(os, static_cast<std::uint64_t>(state.step));
  write_blob(os, rng_to_string(state.sampler_rng));
  write_blob(os, rng_to_string(state.aug_rng));
  write_blob(os, rng_to_string(state.triplet_rng));

  const auto& params = state.model->store().params();
  write_u64(os, params.size());
  for (const auto& [name, v] : params) {
    write_blob(os, name);
    write_tensor(os, v->value);
  }
  const auto& buffers = state.model->store().buffers();
  write_u64(os, buffers.size());
  for (const auto& [name, t] : buffers) {
    write_blob(os, name);
    write_tensor(os, *t);
  }
  auto& opt = const_cast<TrainerState&>(state).optimizer;
  write_u64(os, static_cast<std::uint64_t>(opt.step_count()));
  for (const auto& m : opt.moment1()) write_tensor(os, m);
  for (const auto& v : opt.moment2()) write_tensor(os, v);
  if (!os) throw IoError("short write on checkpoint " + path);
}

std::unique_ptr<TrainerState> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("checkpoint not found: " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a ucf-forge checkpoint: " + path);
  const std::uint64_t version = read_u64(is);
  if (version != 1)
    throw IoError("unsupported checkpoint version " +
                  std::to_string(version));

  const TrainConfig config =
      TrainConfig::from_kv(KvConfig::parse_string(read_blob(is)));
  const auto vocabulary = split(read_blob(is), ',');
  auto state = init_trainer(config, vocabulary);
  state->step = static_cast<std::int64_t>(read_u64(is));
  state->sampler_rng = rng_from_string(read_blob(is));
  state->aug_rng = rng_from_string(read_blob(is));
  state->triplet_rng = rng_from_string(read_blob(is));

  const std::uint64_t n_params = read_u64(is);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = read_blob(is);
    auto v = state->model->store().find(name);
    Tensor<float> t = read_tensor(is);
    if (t.shape != v->value.shape)
      throw IoError("checkpoint parameter " + name + " has shape " +
                    shape_str(t.shape) + ", model expects " +
                    shape_str(v->value.shape));
    v->value = std::move(t);
  }
  const std::uint64_t n_buffers = read_u64(is);
  for (std::uint64_t i = 0; i < n_buffers; ++i) {
    const std::string name = read_blob(is);
    *state->model->store().find_buffer(name) = read_tensor(is);
  }
  state->optimizer.set_step_count(static_cast<std::int64_t>(read_u64(is)));
  for (auto& m : state->optimizer.moment1()) m = read_tensor(is);
  for (auto& v : state->optimizer.moment2()) v = read_tensor(is);
  if (!is) throw IoError("truncated checkpoint: " + path);
  return state;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

std::string format_metrics_line(std::int64_t step, const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%" PRId64 "\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g", step,
                r.ce_common, r.ce_specific, r.reconstruction, r.contrastive,
                r.total);
  return buf;
}

namespace {

void augment_batch(PairBatch& batch, const AugConfig& cfg, Rng& rng) {
  const int size = batch.fake_images.dim(2);
  const std::int64_t stride = static_cast<std::int64_t>(3) * size * size;
  for (Tensor<float>* images : {&batch.fake_images, &batch.real_images}) {
    for (int b = 0; b < batch.pairs(); ++b) {
      Tensor<float> img({3, size, size});
      std::copy_n(images->ptr() + b * stride, stride, img.ptr());
      img = apply_augmentations(img, cfg, rng);
      std::copy_n(img.ptr(), stride, images->ptr() + b * stride);
    }
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const CorpusManifest& manifest,
                  const std::string& out_dir, const std::string& resume_from) {
  config.validate();
  manifest.validate();

  std::unique_ptr<TrainerState> state;
  if (!resume_from.empty()) {
    state = load_checkpoint(resume_from);
    if (state->config.to_kv().entries() != config.to_kv().entries())
      log_warn("resume: checkpoint config differs from the requested config; "
               "continuing with the checkpoint's");
  } else {
    state = init_trainer(config, manifest.method_vocabulary);
  }

  auto provider = make_provider(manifest);

  TrainResult result;
  std::ofstream metrics;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    result.metrics_path = (fs::path(out_dir) / "metrics.tsv").string();
    const bool fresh = state->step == 0;
    metrics.open(result.metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot write metrics to " + result.metrics_path);
    if (fresh)
      metrics << "step\tce_common\tce_specific\treconstruction\tcontrastive\t"
                 "total\n";
  }

  const AugConfig aug = state->config.augment ? state->config.aug
                                              : AugConfig::none();
  while (state->step < state->config.steps) {
    PairBatch batch = sample_pair_batch(manifest, *provider,
                                        state->config.batch_pairs,
                                        state->sampler_rng);
    if (aug.enabled()) augment_batch(batch, aug, state->aug_rng);
    LossReport report = train_step(*state, batch);
    result.history.push_back(report);
    if (metrics.is_open())
      metrics << format_metrics_line(state->step, report) << "\n";
    if (!out_dir.empty() && state->step < state->config.steps &&
        state->step % state->config.checkpoint_every == 0) {
      save_checkpoint(*state,
                      (fs::path(out_dir) /
                       ("checkpoint_step" + std::to_string(state->step) +
                        ".bin"))
                          .string());
    }
  }
  if (!out_dir.empty()) {
    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
    save_checkpoint(*state, result.checkpoint_path);
  }
  return result;
}

TrainResult baseline_train(TrainConfig config, const CorpusManifest& manifest,
                           const std::string& out_dir) {
  config.ablation = AblationFlags::from_code("none");
  return train(config, manifest, out_dir);
}

}  // namespace ucf
