#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "grunt/cli.hpp"
#include "grunt/dsp.hpp"
#include "grunt/eval.hpp"
#include "grunt/features.hpp"
#include "grunt/ingest.hpp"
#include "grunt/learn/net.hpp"
#include "grunt/synth.hpp"

namespace py = pybind11;
using namespace grunt;

namespace {

AudioClip make_clip(std::vector<double> samples, int sample_rate) {
  AudioClip clip;
  clip.samples = std::move(samples);
  clip.sample_rate = sample_rate;
  return clip;
}

py::dict record_dict(const AnnotationRecord& r) {
  py::dict d;
  d["clip_id"] = r.clip_id();
  d["recording_id"] = r.recording_id;
  d["player_id"] = r.player_id;
  d["start_ms"] = r.start_ms;
  d["duration_ms"] = r.duration_ms;
  d["sex"] = std::string(to_string(r.sex));
  d["score"] = std::string(to_string(r.score));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the grunt feature extraction and evaluation library";

  // Translators are tried newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<LeakageError>(m, "LeakageError", PyExc_RuntimeError);

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        auto clip = read_wav(path);
        return py::make_tuple(clip.samples, clip.sample_rate);
      },
      py::arg("path"), "Returns (samples, sample_rate) with samples in [-1, 1].");

  m.def(
      "load_manifest",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& r : load_manifest(path).records) out.append(record_dict(r));
        return out;
      },
      py::arg("path"));

  m.def(
      "synthesize",
      [](const std::filesystem::path& dir, int players, int clips, std::uint64_t seed, bool separable) {
        SyntheticSpec spec;
        spec.n_players = players;
        spec.clips_per_player = clips;
        spec.seed = seed;
        spec.separable = separable;
        write_corpus(generate_synthetic_corpus(spec), dir);
      },
      py::arg("dir"), py::arg("players") = 20, py::arg("clips") = 30, py::arg("seed") = 7,
      py::arg("separable") = true);

  m.def("feature_kinds", [] {
    std::vector<std::string> out;
    for (auto k : {FeatureKind::lld, FeatureKind::mfcc, FeatureKind::spectrogram, FeatureKind::compare_functionals,
                   FeatureKind::egemaps_functionals})
      out.emplace_back(to_string(k));
    return out;
  });

  m.def(
      "extract_feature",
      [](std::vector<double> samples, int sample_rate, const std::string& kind) -> RowMatrix {
        return extract_feature(make_clip(std::move(samples), sample_rate), parse_feature(kind)).values;
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("kind"));

  m.def("hann_window", &hann_window, py::arg("n"));
  m.def("hz_to_mel", &hz_to_mel, py::arg("hz"));
  m.def("mel_to_hz", &mel_to_hz, py::arg("mel"));

  m.def(
      "confusion",
      [](const std::vector<int>& truth, const std::vector<int>& pred, int n_classes) {
        const auto cm = confusion(truth, pred, n_classes);
        std::vector<std::vector<std::int64_t>> rows(static_cast<std::size_t>(n_classes));
        for (int t = 0; t < n_classes; ++t)
          for (int p = 0; p < n_classes; ++p) rows[static_cast<std::size_t>(t)].push_back(cm.at(t, p));
        return rows;
      },
      py::arg("truth"), py::arg("pred"), py::arg("n_classes") = 2, "Counts indexed [truth][pred].");

  m.def(
      "uar",
      [](const std::vector<int>& truth, const std::vector<int>& pred, int n_classes) {
        return uar(confusion(truth, pred, n_classes));
      },
      py::arg("truth"), py::arg("pred"), py::arg("n_classes") = 2);

  m.def(
      "plan_folds",
      [](const std::filesystem::path& manifest, int k, std::uint64_t seed) {
        return plan_folds(load_manifest(manifest), k, seed).fold_members;
      },
      py::arg("manifest"), py::arg("k") = 5, py::arg("seed") = 0, "Player ids of each fold.");

  m.def(
      "grad_check",
      [](const std::string& architecture, int trials, std::uint64_t seed) {
        NetConfig config = lstm_rnn_config(8, 3, 4);
        if (parse_architecture(architecture) == Architecture::crnn) {
          config = NetConfig{};
          config.architecture = Architecture::crnn;
          config.time_steps = 8;
          config.features = 3;
          config.conv_blocks = {{2, 3}, {2, 3}, {2, 3}};
          config.lstm_hidden = 4;
        }
        const auto r = grad_check(config, trials, seed);
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["mean_rel_error"] = r.mean_rel_error;
        d["checked"] = r.checked;
        d["finite"] = r.finite;
        return d;
      },
      py::arg("architecture"), py::arg("trials") = 3, py::arg("seed") = 1,
      "Finite-difference gradient check on a tiny network of the given architecture.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "grunt");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line tool in-process; returns (exit_code, stdout, stderr).");
}
