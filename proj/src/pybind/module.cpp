#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "ucf/decoder.hpp"
#include "ucf/evalkit.hpp"
#include "ucf/synth.hpp"
#include "ucf/threading.hpp"
#include "ucf/trainer.hpp"

namespace py = pybind11;
using namespace ucf;

namespace {

Tensor<float> tensor_from_array(const py::array_t<float>& arr) {
  auto buf = arr.request();
  std::vector<int> shape(buf.ndim);
  for (int i = 0; i < buf.ndim; ++i) shape[i] = static_cast<int>(buf.shape[i]);
  Tensor<float> t(shape);
  auto contiguous = py::array_t<float, py::array::c_style |
                                           py::array::forcecast>(arr);
  std::copy_n(contiguous.data(), t.numel(), t.ptr());
  return t;
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> arr(shape);
  std::copy_n(t.ptr(), t.numel(), arr.mutable_data());
  return arr;
}

KvConfig kv_from_dict(const py::dict& d) {
  KvConfig kv;
  for (auto item : d)
    kv.set(py::str(item.first).cast<std::string>(),
           py::str(item.second).cast<std::string>());
  return kv;
}

py::dict report_to_dict(const LossReport& r) {
  py::dict d;
  d["ce_common"] = r.ce_common;
  d["ce_specific"] = r.ce_specific;
  d["reconstruction"] = r.reconstruction;
  d["contrastive"] = r.contrastive;
  d["total"] = r.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Forgery-detection toolkit: disentangled encoders, conditional "
            "AdaIN decoder, multi-task training and evaluation.";
  init_threading();

  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return auc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"),
      "Rank-based AUC; ties contribute one half.");

  m.def(
      "adain",
      [](const py::array_t<float>& content, const py::array_t<float>& style) {
        auto c = ag::constant(tensor_from_array(content));
        auto f = ag::constant(tensor_from_array(style));
        return array_from_tensor(adain(c, f)->value);
      },
      py::arg("content"), py::arg("fingerprint"),
      "Adaptive instance normalization over (N,C,H,W) arrays.");

  m.def(
      "gen_data",
      [](const py::dict& spec_dict, const std::string& out_dir) {
        const SynthSpec spec = synth_spec_from_kv(kv_from_dict(spec_dict));
        const CorpusManifest manifest = generate_synthetic_corpus(spec);
        write_corpus_to_dir(manifest, out_dir);
        py::dict d;
        d["n_samples"] = manifest.samples.size();
        d["vocabulary"] = manifest.method_vocabulary;
        d["out_dir"] = out_dir;
        return d;
      },
      py::arg("spec"), py::arg("out_dir"),
      "Generate the synthetic corpus and write PNGs plus manifest.txt.");

  m.def(
      "scan_dataset",
      [](const std::string& root) {
        const CorpusManifest manifest = scan_dataset_dir(root);
        py::dict d;
        d["n_samples"] = manifest.samples.size();
        d["vocabulary"] = manifest.method_vocabulary;
        py::list ids;
        for (const auto& s : manifest.samples) ids.append(s.sample_id);
        d["sample_ids"] = ids;
        return d;
      },
      py::arg("root"), "Scan a <split>/<class>/*.png|jpg directory tree.");

  m.def(
      "train",
      [](const py::dict& config_dict, const std::string& data_dir,
         const std::string& out_dir) {
        const TrainConfig cfg = TrainConfig::from_kv(kv_from_dict(config_dict));
        const CorpusManifest manifest = scan_dataset_dir(data_dir);
        const TrainResult result = train(cfg, manifest, out_dir);
        py::dict d;
        d["checkpoint"] = result.checkpoint_path;
        d["metrics"] = result.metrics_path;
        d["steps"] = result.history.size();
        if (!result.history.empty())
          d["final"] = report_to_dict(result.history.back());
        return d;
      },
      py::arg("config"), py::arg("data_dir"), py::arg("out_dir"),
      "Train on a scanned dataset directory; writes checkpoint and metrics.");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& data_dir,
         const std::string& split, const std::string& method,
         const std::vector<std::string>& probes) {
        auto state = load_checkpoint(checkpoint);
        CorpusManifest manifest = scan_dataset_dir(data_dir);
        auto provider = make_provider(manifest);
        const CorpusManifest eval_manifest =
            method.empty() ? manifest : manifest.restrict_to_method(method);
        EvalReport report =
            evaluate(*state->model, eval_manifest, *provider, split);
        py::dict d;
        d["corpus"] = report.corpus_id;
        d["n_samples"] = report.n_samples;
        d["auc_common"] = report.auc_common;
        for (const auto& name : probes)
          d[("probe_" + name).c_str()] =
              probe_features(*state->model, manifest, *provider,
                             feature_kind_from_string(name), method);
        return d;
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("split") = "test",
      py::arg("method") = "", py::arg("probes") = std::vector<std::string>{},
      "Frame-level AUC of the common-feature detector, plus optional "
      "frozen-feature probes.");

  m.def(
      "detect",
      [](const std::string& checkpoint, const py::array_t<float>& images) {
        auto state = load_checkpoint(checkpoint);
        const auto scores = state->model->detect(tensor_from_array(images));
        py::array_t<double> out(static_cast<py::ssize_t>(scores.size()));
        std::copy(scores.begin(), scores.end(), out.mutable_data());
        return out;
      },
      py::arg("checkpoint"), py::arg("images"),
      "Fake probability per image for a (N,3,S,S) array in [0,1].");

  m.def(
      "export_features",
      [](const std::string& checkpoint, const std::string& data_dir,
         const std::string& split, const std::string& out_path) {
        auto state = load_checkpoint(checkpoint);
        const CorpusManifest manifest = scan_dataset_dir(data_dir);
        auto provider = make_provider(manifest);
        export_features(*state->model, manifest, *provider, split, out_path);
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("split"),
      py::arg("out_path"),
      "Write the pooled-feature table used for embedding visualization.");

  m.attr("__version__") = "0.1.0";
}
