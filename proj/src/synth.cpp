#include "ucf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ucf/errors.hpp"
#include "ucf/imageio.hpp"
#include "ucf/log.hpp"

namespace fs = std::filesystem;

namespace ucf {

namespace {

// artifact scaling so strengths in [0,1] stay comfortably inside the image
// range headroom left by base composition
constexpr double kCommonAmp = 0.06;
constexpr double kSpecificAmp = 0.12;

// per-image broadband noise range (std of the real images' noise floor)
constexpr double kNoiseLo = 0.035;
constexpr double kNoiseHi = 0.085;

std::uint64_t sub_seed(std::uint64_t seed, const std::string& tag) {
  return fnv1a(tag, seed ^ 0x9e3779b97f4a7c15ull);
}

double rms(const Tensor<float>& t) {
  double acc = 0.0;
  for (float v : t.data) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(t.numel()));
}

void scale_to_unit_rms(Tensor<float>& t) {
  const double r = rms(t);
  if (r <= 0) return;
  for (auto& v : t.data) v = static_cast<float>(v / r);
}

double dot(const Tensor<float>& a, const Tensor<float>& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

bool parse_sample_id(const std::string& id, bool* is_fake, std::string* method,
                     int* index) {
  if (id.rfind("real_", 0) == 0) {
    *is_fake = false;
    method->clear();
    *index = std::atoi(id.c_str() + 5);
    return true;
  }
  if (id.rfind("fake_", 0) == 0) {
    const auto us = id.rfind('_');
    if (us == std::string::npos || us <= 5) return false;
    *is_fake = true;
    *method = id.substr(5, us - 5);
    *index = std::atoi(id.c_str() + us + 1);
    return true;
  }
  return false;
}

}  // namespace

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

SynthSpec synth_spec_from_kv(const KvConfig& kv) {
  SynthSpec s;
  s.n_real = static_cast<int>(kv.get_int("n_real", s.n_real));
  s.methods = kv.get_list("methods");
  s.n_per_method =
      static_cast<int>(kv.get_int("n_per_method", s.n_per_method));
  s.image_size = static_cast<int>(kv.get_int("image_size", s.image_size));
  s.common_artifact_strength =
      kv.get_double("common_artifact_strength", s.common_artifact_strength);
  s.specific_artifact_strength = kv.get_double("specific_artifact_strength",
                                               s.specific_artifact_strength);
  s.held_out_methods = kv.get_list("held_out_methods");
  s.seed = kv.get_u64("seed", s.seed);
  s.test_fraction = kv.get_double("test_fraction", s.test_fraction);
  return s;
}

KvConfig synth_spec_to_kv(const SynthSpec& spec) {
  KvConfig kv;
  char buf[64];
  auto put_d = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv.set(k, buf);
  };
  kv.set("n_real", std::to_string(spec.n_real));
  std::string methods;
  for (const auto& m : spec.methods)
    methods += (methods.empty() ? "" : ",") + m;
  kv.set("methods", methods);
  kv.set("n_per_method", std::to_string(spec.n_per_method));
  kv.set("image_size", std::to_string(spec.image_size));
  put_d("common_artifact_strength", spec.common_artifact_strength);
  put_d("specific_artifact_strength", spec.specific_artifact_strength);
  std::string held;
  for (const auto& m : spec.held_out_methods)
    held += (held.empty() ? "" : ",") + m;
  kv.set("held_out_methods", held);
  kv.set("seed", std::to_string(spec.seed));
  put_d("test_fraction", spec.test_fraction);
  return kv;
}

void SynthSpec::validate() const {
  if (n_real < 1) throw ValidationError("synth spec: n_real must be >= 1");
  if (n_per_method < 1)
    throw ValidationError("synth spec: n_per_method must be >= 1");
  if (image_size < 16)
    throw ValidationError("synth spec: image_size must be >= 16");
  if (methods.empty())
    throw ValidationError("synth spec: methods must be non-empty");
  std::set<std::string> uniq(methods.begin(), methods.end());
  if (uniq.size() != methods.size())
    throw ValidationError("synth spec: methods contain duplicates");
  if (uniq.count("real"))
    throw ValidationError("synth spec: 'real' is reserved, methods cannot use it");
  if (common_artifact_strength < 0.0 || common_artifact_strength > 1.0)
    throw ValidationError(
        "synth spec: common_artifact_strength must be in [0,1]");
  if (specific_artifact_strength < 0.0 || specific_artifact_strength > 1.0)
    throw ValidationError(
        "synth spec: specific_artifact_strength must be in [0,1]");
  for (const auto& m : held_out_methods)
    if (!uniq.count(m))
      throw ValidationError("synth spec: held_out_methods entry '" + m +
                            "' is not in methods");
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ValidationError("synth spec: test_fraction must be in [0,1)");
}

void CorpusManifest::validate() const {
  if (method_vocabulary.empty() || method_vocabulary[0] != "real")
    throw ValidationError("manifest: vocabulary must start with 'real'");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.sample_id).second)
      throw ValidationError("manifest: duplicate sample_id " + s.sample_id);
    if (s.y == 0 && s.y_prime != 0)
      throw ValidationError("manifest: real sample " + s.sample_id +
                            " must carry method index 0");
    if (s.y == 1 &&
        (s.y_prime < 1 ||
         s.y_prime >= static_cast<int>(method_vocabulary.size())))
      throw ValidationError("manifest: fake sample " + s.sample_id +
                            " has method index outside the vocabulary");
    if (s.split != "train" && s.split != "test")
      throw ValidationError("manifest: sample " + s.sample_id +
                            " has unknown split '" + s.split + "'");
  }
}

std::vector<int> CorpusManifest::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

CorpusManifest CorpusManifest::restrict_to_method(
    const std::string& method) const {
  auto it = std::find(method_vocabulary.begin(), method_vocabulary.end(),
                      method);
  if (it == method_vocabulary.end() || it == method_vocabulary.begin())
    throw ValidationError("manifest: unknown method '" + method + "'");
  const int midx = static_cast<int>(it - method_vocabulary.begin());
  CorpusManifest out = *this;
  out.samples.clear();
  for (const auto& s : samples)
    if (s.y == 0 || s.y_prime == midx) out.samples.push_back(s);
  return out;
}

std::vector<std::string> CorpusManifest::held_out_methods() const {
  std::vector<int> train_count(method_vocabulary.size(), 0);
  std::vector<int> test_count(method_vocabulary.size(), 0);
  for (const auto& s : samples) {
    if (s.y != 1) continue;
    (s.split == "train" ? train_count : test_count)[s.y_prime]++;
  }
  std::vector<std::string> out;
  for (std::size_t m = 1; m < method_vocabulary.size(); ++m)
    if (train_count[m] == 0 && test_count[m] > 0)
      out.push_back(method_vocabulary[m]);
  return out;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest to " + path);
  out << "# ucf-forge manifest v1\n# vocabulary:";
  for (const auto& m : manifest.method_vocabulary) out << ' ' << m;
  out << "\n";
  for (const auto& s : manifest.samples)
    out << s.sample_id << '\t' << s.source_id << '\t' << s.y << '\t'
        << manifest.method_vocabulary[s.y_prime] << '\t' << s.split << '\n';
  if (!out) throw IoError("short write on manifest " + path);
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("manifest not found: " + path);
  CorpusManifest m;
  m.source = CorpusManifest::Source::kDirectory;
  std::string line;
  std::vector<std::array<std::string, 5>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# vocabulary:";
      if (line.rfind(tag, 0) == 0)
        m.method_vocabulary = split(line.substr(tag.size()), ' ');
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 5)
      throw ValidationError("manifest line needs 5 tab-separated columns: " +
                            line);
    rows.push_back({cols[0], cols[1], cols[2], cols[3], cols[4]});
  }
  if (m.method_vocabulary.empty()) {
    std::set<std::string> methods;
    for (const auto& r : rows)
      if (r[3] != "real") methods.insert(r[3]);
    m.method_vocabulary.assign({"real"});
    m.method_vocabulary.insert(m.method_vocabulary.end(), methods.begin(),
                               methods.end());
  }
  for (const auto& r : rows) {
    SampleRecord s;
    s.sample_id = r[0];
    s.source_id = r[1];
    s.y = std::stoi(r[2]);
    auto it = std::find(m.method_vocabulary.begin(),
                        m.method_vocabulary.end(), r[3]);
    if (it == m.method_vocabulary.end())
      throw ValidationError("manifest: method '" + r[3] +
                            "' missing from vocabulary");
    s.y_prime = static_cast<int>(it - m.method_vocabulary.begin());
    s.split = r[4];
    m.samples.push_back(std::move(s));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

SyntheticRenderer::SyntheticRenderer(const SynthSpec& spec) : spec_(spec) {
  spec_.validate();
  const int s = spec_.image_size;

  // common artifact: high-passed broadband field, unit RMS, bounded
  {
    Rng rng(sub_seed(spec_.seed, "common_artifact"));
    Tensor<float> raw({3, s, s});
    for (auto& v : raw.data) v = static_cast<float>(rng.normal());
    common_ = Tensor<float>({3, s, s});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          double local = 0.0;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= s || xx < 0 || xx >= s) continue;
              local += raw[(c * s + yy) * s + xx];
              ++cnt;
            }
          common_[(c * s + y) * s + x] =
              raw[(c * s + y) * s + x] -
              static_cast<float>(local / static_cast<double>(cnt));
        }
    scale_to_unit_rms(common_);
    for (auto& v : common_.data) v = std::clamp(v, -2.5f, 2.5f);
    scale_to_unit_rms(common_);
  }

  // method artifacts: smooth low-frequency fields, orthogonalized against
  // the common template and one another
  for (const auto& method : spec_.methods) {
    Rng rng(sub_seed(spec_.seed, "specific_artifact:" + method));
    Tensor<float> pat({3, s, s});
    const int waves = 3;
    for (int c = 0; c < 3; ++c) {
      double fx[waves], fy[waves], ph[waves], amp[waves];
      for (int k = 0; k < waves; ++k) {
        fx[k] = 1.0 + rng.uniform(3);
        fy[k] = 1.0 + rng.uniform(3);
        ph[k] = rng.uniform_real(0.0, 6.283185307179586);
        amp[k] = rng.uniform_real(0.5, 1.0);
      }
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          double v = 0.0;
          for (int k = 0; k < waves; ++k)
            v += amp[k] * std::sin(6.283185307179586 *
                                       (fx[k] * x + fy[k] * y) / s +
                                   ph[k]);
          pat[(c * s + y) * s + x] = static_cast<float>(v);
        }
    }
    // Gram-Schmidt last; smooth fields stay bounded without clipping, and
    // clipping afterwards would break the orthogonality the projection
    // invariant relies on
    const double c_dot = dot(pat, common_) / dot(common_, common_);
    for (std::int64_t i = 0; i < pat.numel(); ++i)
      pat[i] -= static_cast<float>(c_dot * common_[i]);
    for (const auto& prev : specific_) {
      const double p_dot = dot(pat, prev) / dot(prev, prev);
      for (std::int64_t i = 0; i < pat.numel(); ++i)
        pat[i] -= static_cast<float>(p_dot * prev[i]);
    }
    scale_to_unit_rms(pat);
    specific_.push_back(std::move(pat));
  }
}

const Tensor<float>& SyntheticRenderer::specific_template(
    int method_index) const {
  if (method_index < 1 ||
      method_index > static_cast<int>(specific_.size()))
    throw ValidationError("specific_template: bad method index " +
                          std::to_string(method_index));
  return specific_[method_index - 1];
}

Tensor<float> SyntheticRenderer::base_image(int real_index,
                                            double noise_var_cut) const {
  const int s = spec_.image_size;
  Rng rng(sub_seed(spec_.seed, "real:" + std::to_string(real_index)));
  Tensor<float> img({3, s, s});

  // background gradient
  double col0[3], col1[3];
  for (int c = 0; c < 3; ++c) {
    col0[c] = rng.uniform_real(0.3, 0.7);
    col1[c] = rng.uniform_real(0.3, 0.7);
  }
  const double angle = rng.uniform_real(0.0, 6.283185307179586);
  const double gx = std::cos(angle), gy = std::sin(angle);

  // face oval and features
  const double fcx = s * rng.uniform_real(0.4, 0.6);
  const double fcy = s * rng.uniform_real(0.4, 0.6);
  const double frx = s * rng.uniform_real(0.22, 0.33);
  const double fry = s * rng.uniform_real(0.26, 0.38);
  double face_col[3];
  for (int c = 0; c < 3; ++c) face_col[c] = rng.uniform_real(-0.22, 0.22);
  const double eye_dx = frx * rng.uniform_real(0.35, 0.55);
  const double eye_dy = -fry * rng.uniform_real(0.15, 0.35);
  const double eye_r = s * rng.uniform_real(0.03, 0.06);
  const double eye_depth = rng.uniform_real(-0.30, -0.12);
  const double mouth_dy = fry * rng.uniform_real(0.3, 0.55);
  const double mouth_rx = frx * rng.uniform_real(0.3, 0.5);
  const double mouth_ry = eye_r * rng.uniform_real(0.5, 1.0);
  const double mouth_depth = rng.uniform_real(-0.25, -0.08);

  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const double t =
            ((x - s / 2.0) * gx + (y - s / 2.0) * gy) / s + 0.5;
        double v = col0[c] + (col1[c] - col0[c]) * std::clamp(t, 0.0, 1.0);
        const double fx = (x - fcx) / frx, fy = (y - fcy) / fry;
        v += face_col[c] * std::exp(-(fx * fx + fy * fy) * 1.8);
        for (int side = -1; side <= 1; side += 2) {
          const double ex = (x - (fcx + side * eye_dx)) / eye_r;
          const double ey = (y - (fcy + eye_dy)) / eye_r;
          v += eye_depth * std::exp(-(ex * ex + ey * ey));
        }
        const double mx = (x - fcx) / mouth_rx;
        const double my = (y - (fcy + mouth_dy)) / mouth_ry;
        v += mouth_depth * std::exp(-(mx * mx + my * my));
        img[(c * s + y) * s + x] =
            static_cast<float>(std::clamp(v, 0.22, 0.78));
      }

  // Broadband per-image noise; the level varies sample to sample. A fake's
  // base trades away the variance its planted high-frequency template will
  // add back, so total high-frequency energy cannot separate the classes;
  // only the template's structure can.
  const double sigma_drawn = rng.uniform_real(kNoiseLo, kNoiseHi);
  const double sigma = std::sqrt(
      std::max(sigma_drawn * sigma_drawn - noise_var_cut, 1e-6));
  for (auto& v : img.data) {
    const double n =
        std::clamp(rng.normal(0.0, sigma), -2.5 * sigma, 2.5 * sigma);
    v = static_cast<float>(std::clamp(static_cast<double>(v) + n, 0.0, 1.0));
  }
  return img;
}

double SyntheticRenderer::fake_noise_var_cut() const {
  const double a = kCommonAmp * spec_.common_artifact_strength;
  return a * a;
}

Tensor<float> SyntheticRenderer::render_base(const SampleRecord& rec) const {
  bool is_fake = false;
  std::string method;
  int index = 0;
  if (!parse_sample_id(rec.sample_id, &is_fake, &method, &index))
    throw ValidationError("cannot parse synthetic sample id " + rec.sample_id);
  if (!is_fake) return base_image(index, 0.0);
  return base_image(index % spec_.n_real, fake_noise_var_cut());
}

Tensor<float> SyntheticRenderer::render(const SampleRecord& rec) const {
  bool is_fake = false;
  std::string method;
  int index = 0;
  if (!parse_sample_id(rec.sample_id, &is_fake, &method, &index))
    throw ValidationError("cannot parse synthetic sample id " + rec.sample_id);
  Tensor<float> img = is_fake
                          ? base_image(index % spec_.n_real,
                                       fake_noise_var_cut())
                          : base_image(index, 0.0);
  if (!is_fake) return img;

  const auto mit = std::find(spec_.methods.begin(), spec_.methods.end(),
                             method);
  if (mit == spec_.methods.end())
    throw ValidationError("sample " + rec.sample_id +
                          " references unknown method " + method);
  const auto& spec_pat = specific_[mit - spec_.methods.begin()];
  const float ca =
      static_cast<float>(kCommonAmp * spec_.common_artifact_strength);
  const float sa =
      static_cast<float>(kSpecificAmp * spec_.specific_artifact_strength);
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = std::clamp(img[i] + ca * common_[i] + sa * spec_pat[i], 0.0f,
                        1.0f);
  return img;
}

// ---------------------------------------------------------------------------
// corpus assembly
// ---------------------------------------------------------------------------

namespace {

std::string pick_split(const SynthSpec& spec, const std::string& sample_id) {
  const std::uint64_t h = fnv1a(sample_id, spec.seed ^ 0x5bd1e995u);
  const double u = static_cast<double>(h % 1000000ull) / 1000000.0;
  return u < spec.test_fraction ? "test" : "train";
}

}  // namespace

CorpusManifest generate_synthetic_corpus(const SynthSpec& spec) {
  spec.validate();
  CorpusManifest m;
  m.source = CorpusManifest::Source::kSynthetic;
  m.synth_spec = spec;
  m.method_vocabulary.push_back("real");
  for (const auto& method : spec.methods)
    m.method_vocabulary.push_back(method);

  std::set<std::string> held(spec.held_out_methods.begin(),
                             spec.held_out_methods.end());
  char buf[64];
  for (int i = 0; i < spec.n_real; ++i) {
    std::snprintf(buf, sizeof(buf), "real_%05d", i);
    SampleRecord r;
    r.sample_id = buf;
    r.source_id = buf;
    r.y = 0;
    r.y_prime = 0;
    r.split = pick_split(spec, r.sample_id);
    m.samples.push_back(std::move(r));
  }
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    const std::string& method = spec.methods[mi];
    for (int j = 0; j < spec.n_per_method; ++j) {
      std::snprintf(buf, sizeof(buf), "fake_%s_%05d", method.c_str(), j);
      SampleRecord r;
      r.sample_id = buf;
      std::snprintf(buf, sizeof(buf), "real_%05d", j % spec.n_real);
      r.source_id = buf;
      r.y = 1;
      r.y_prime = static_cast<int>(mi) + 1;
      r.split = held.count(method) ? "test" : pick_split(spec, r.sample_id);
      m.samples.push_back(std::move(r));
    }
  }
  m.validate();
  return m;
}

void write_corpus_to_dir(const CorpusManifest& manifest,
                         const std::string& root) {
  if (manifest.source != CorpusManifest::Source::kSynthetic)
    throw ValidationError("write_corpus_to_dir: manifest is not synthetic");
  SyntheticRenderer renderer(manifest.synth_spec);
  fs::create_directories(root);
  for (const auto& s : manifest.samples) {
    const std::string cls =
        s.y == 0 ? "real" : manifest.method_vocabulary[s.y_prime];
    const fs::path dir = fs::path(root) / s.split / cls;
    fs::create_directories(dir);
    save_png((dir / (s.sample_id + ".png")).string(), renderer.render(s));
  }
  save_manifest(manifest, (fs::path(root) / "manifest.txt").string());
}

CorpusManifest scan_dataset_dir(const std::string& root) {
  if (!fs::exists(root))
    throw NotFoundError("dataset root not found: " + root);
  CorpusManifest m;
  m.source = CorpusManifest::Source::kDirectory;
  m.root = root;

  std::set<std::string> methods;
  std::vector<std::tuple<std::string, std::string, std::string>> found;
  for (const char* split : {"train", "test"}) {
    const fs::path split_dir = fs::path(root) / split;
    if (!fs::exists(split_dir)) continue;
    for (const auto& cls_entry : fs::directory_iterator(split_dir)) {
      if (!cls_entry.is_directory()) continue;
      const std::string cls = cls_entry.path().filename().string();
      for (const auto& f : fs::directory_iterator(cls_entry.path())) {
        if (!f.is_regular_file()) continue;
        std::string ext = f.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") {
          log_warn("scan_dataset_dir: skipping non-image file " +
                   f.path().string());
          continue;
        }
        found.emplace_back(split, cls, f.path().filename().string());
        if (cls != "real") methods.insert(cls);
      }
    }
  }
  if (found.empty())
    throw EmptyCorpusError("no images found under " + root +
                           " (expected <split>/<class>/*.png|jpg)");

  m.method_vocabulary.push_back("real");
  m.method_vocabulary.insert(m.method_vocabulary.end(), methods.begin(),
                             methods.end());
  std::sort(found.begin(), found.end());
  for (const auto& [split, cls, name] : found) {
    SampleRecord r;
    r.sample_id = split + "/" + cls + "/" + name;
    r.source_id = r.sample_id;
    r.y = cls == "real" ? 0 : 1;
    const auto it = std::find(m.method_vocabulary.begin(),
                              m.method_vocabulary.end(), cls);
    r.y_prime = r.y == 0 ? 0
                         : static_cast<int>(it - m.method_vocabulary.begin());
    r.split = split;
    m.samples.push_back(std::move(r));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// providers and sampling
// ---------------------------------------------------------------------------

namespace {

class SyntheticProvider final : public ImageProvider {
 public:
  explicit SyntheticProvider(const SynthSpec& spec) : renderer_(spec) {}

  Tensor<float> image(const SampleRecord& rec) override {
    auto it = cache_.find(rec.sample_id);
    if (it != cache_.end()) return it->second;
    auto img = renderer_.render(rec);
    cache_.emplace(rec.sample_id, img);
    return img;
  }

 private:
  SyntheticRenderer renderer_;
  std::unordered_map<std::string, Tensor<float>> cache_;
};

class DirectoryProvider final : public ImageProvider {
 public:
  explicit DirectoryProvider(std::string root) : root_(std::move(root)) {}

  Tensor<float> image(const SampleRecord& rec) override {
    auto it = cache_.find(rec.sample_id);
    if (it != cache_.end()) return it->second;
    auto img = load_image((fs::path(root_) / rec.source_id).string());
    cache_.emplace(rec.sample_id, img);
    return img;
  }

 private:
  std::string root_;
  std::unordered_map<std::string, Tensor<float>> cache_;
};

}  // namespace

std::unique_ptr<ImageProvider> make_provider(const CorpusManifest& manifest) {
  if (manifest.source == CorpusManifest::Source::kSynthetic)
    return std::make_unique<SyntheticProvider>(manifest.synth_spec);
  return std::make_unique<DirectoryProvider>(manifest.root);
}

PairBatch sample_pair_batch(const CorpusManifest& manifest,
                            ImageProvider& provider, int batch_pairs,
                            Rng& rng) {
  if (batch_pairs < 1)
    throw ValidationError("sample_pair_batch: batch_pairs must be >= 1");
  std::vector<int> train_fakes, train_reals;
  for (int i = 0; i < static_cast<int>(manifest.samples.size()); ++i) {
    const auto& s = manifest.samples[i];
    if (s.split != "train") continue;
    (s.y == 1 ? train_fakes : train_reals).push_back(i);
  }
  if (train_fakes.empty() || train_reals.empty())
    throw InsufficientDataError(
        "sample_pair_batch: train split needs at least one fake and one real "
        "sample (got " +
        std::to_string(train_fakes.size()) + " fakes, " +
        std::to_string(train_reals.size()) + " reals)");

  PairBatch batch;
  const auto& any = manifest.samples[train_fakes[0]];
  const auto probe = provider.image(any);
  const int size = probe.dim(1);
  batch.fake_images = Tensor<float>({batch_pairs, 3, size, size});
  batch.real_images = Tensor<float>({batch_pairs, 3, size, size});
  const std::int64_t stride = static_cast<std::int64_t>(3) * size * size;

  for (int b = 0; b < batch_pairs; ++b) {
    const auto& fake =
        manifest.samples[train_fakes[rng.uniform(train_fakes.size())]];
    const auto& real =
        manifest.samples[train_reals[rng.uniform(train_reals.size())]];
    const auto fi = provider.image(fake);
    const auto ri = provider.image(real);
    if (fi.shape != probe.shape || ri.shape != probe.shape)
      throw ShapeError("sample_pair_batch: inconsistent image sizes in corpus");
    std::copy_n(fi.ptr(), stride, batch.fake_images.ptr() + b * stride);
    std::copy_n(ri.ptr(), stride, batch.real_images.ptr() + b * stride);
    batch.fake_ids.push_back(fake.sample_id);
    batch.real_ids.push_back(real.sample_id);
    batch.y_prime.push_back(fake.y_prime);
    batch.pair_index.push_back(b);
  }
  batch.y.assign(batch_pairs, 1);
  batch.y.insert(batch.y.end(), batch_pairs, 0);
  batch.y_prime.insert(batch.y_prime.end(), batch_pairs, 0);
  return batch;
}

// ---------------------------------------------------------------------------
// augmentations
// ---------------------------------------------------------------------------

void AugConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_prob) || !prob(compress_prob) ||
      !prob(brightness_contrast_prob))
    throw ValidationError("augment: probabilities must be in [0,1]");
  if (compress_quality_min < 1 || compress_quality_max > 100 ||
      compress_quality_min > compress_quality_max)
    throw ValidationError("augment: quality range must satisfy 1 <= lo <= hi <= 100");
  if (brightness_delta < 0.0 || contrast_delta < 0.0)
    throw ValidationError("augment: deltas must be >= 0");
}

Tensor<float> apply_augmentations(const Tensor<float>& img,
                                  const AugConfig& cfg, Rng& rng) {
  cfg.validate();
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw ShapeError("apply_augmentations: want (3,H,W)");
  Tensor<float> out = img;
  const int h = img.dim(1), w = img.dim(2);

  if (rng.bernoulli(cfg.flip_prob)) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y) {
        float* row = out.ptr() + (static_cast<std::int64_t>(c) * h + y) * w;
        std::reverse(row, row + w);
      }
  }
  if (rng.bernoulli(cfg.brightness_contrast_prob)) {
    const float b = static_cast<float>(
        rng.uniform_real(-cfg.brightness_delta, cfg.brightness_delta));
    const float k = 1.0f + static_cast<float>(rng.uniform_real(
                               -cfg.contrast_delta, cfg.contrast_delta));
    for (auto& v : out.data)
      v = std::clamp((v - 0.5f) * k + 0.5f + b, 0.0f, 1.0f);
  }
  if (rng.bernoulli(cfg.compress_prob)) {
    const int q = cfg.compress_quality_min +
                  static_cast<int>(rng.uniform(
                      cfg.compress_quality_max - cfg.compress_quality_min + 1));
    out = jpeg_roundtrip(out, q);
  }
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace ucf
