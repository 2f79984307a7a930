#include "eegstate/checkpoint.hpp"
#include "eegstate/config.hpp"
#include "eegstate/gradcheck.hpp"
#include "eegstate/metrics.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace eegstate;

namespace {

MontageMap montage_of(const std::vector<std::string>& channels) {
  MontageMap map = resolve_montage(channels);
  if (map.num_channels() == 0) throw EmptyMontageError("no channel maps onto the template");
  return map;
}

// Pre-trained model loaded from a checkpoint, for feature extraction.
class Model {
 public:
  explicit Model(const std::filesystem::path& path) : ckpt_(load_checkpoint(path)) {}

  Matrix encode(const Matrix& x, const std::vector<std::string>& channels, const std::string& encoder) {
    const MontageMap map = montage_of(channels);
    const Matrix rows = map.select_rows(x);
    const EncoderSlot slot = parse_encoder_slot(encoder);
    Encoder& enc = slot == EncoderSlot::shared
                       ? ckpt_.model->shared
                       : ckpt_.model->state_encoder(static_cast<BrainState>(static_cast<int>(slot) - 1));
    Matrix z = enc.encode(rows, map);
    enc.release();
    return z;
  }

  py::dict config() const {
    return py::module_::import("json").attr("loads")(to_json(ckpt_.model->config()).dump());
  }

  int epoch() const { return ckpt_.state.epoch; }
  long global_step() const { return ckpt_.state.global_step; }

 private:
  LoadedCheckpoint ckpt_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "State-aware EEG pre-training: core bindings";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<EmptyMontageError>(m, "EmptyMontageError", PyExc_ValueError);

  m.def("version", [] { return std::string(version()); });

  m.def("num_patches", &num_patches, py::arg("length"), py::arg("patch_len"), py::arg("patch_stride"));
  m.def("weight_schedule", py::overload_cast<double, int>(&weight_schedule), py::arg("w"), py::arg("epoch"));
  m.def("resample", &resample, py::arg("x"), py::arg("rate_in"), py::arg("rate_out"));

  m.def(
      "resolve_montage",
      [](const std::vector<std::string>& channels) {
        const MontageMap map = resolve_montage(channels);
        py::dict d;
        d["channels"] = map.channel_names;
        d["template_indices"] = map.template_indices;
        d["region_labels"] = map.region_labels;
        d["kept"] = map.kept;
        d["dropped"] = map.dropped;
        return d;
      },
      py::arg("channels"));
  m.def(
      "state_prior",
      [](const std::string& state, const std::vector<std::string>& channels) {
        return Vector(state_prior(parse_state(state), montage_of(channels)));
      },
      py::arg("state"), py::arg("channels"));

  auto mm = m.def_submodule("metrics", "classification metrics");
  mm.def("balanced_accuracy", &metrics::balanced_accuracy, py::arg("y_true"), py::arg("y_pred"));
  mm.def("cohens_kappa", &metrics::cohens_kappa, py::arg("y_true"), py::arg("y_pred"));
  mm.def("weighted_f1", &metrics::weighted_f1, py::arg("y_true"), py::arg("y_pred"));
  mm.def("auroc", &metrics::auroc, py::arg("y_true"), py::arg("scores"));
  mm.def("auc_pr", &metrics::auc_pr, py::arg("y_true"), py::arg("scores"));
  mm.def("evaluate", &metrics::evaluate, py::arg("y_true"), py::arg("y_pred"),
         py::arg("positive_scores") = std::vector<double>{});

  m.def(
      "render_config",
      [](const std::string& path) {
        return render_config(path.empty() ? default_config() : load_config(path));
      },
      py::arg("path") = "", "Canonical text of a config file (defaults when path is empty).");

  m.def(
      "generate_synthetic",
      [](const std::string& config_path) {
        const RunConfig cfg = load_config(config_path, {"synth"});
        py::list out;
        for (const auto& item : synth::generate_corpus(*cfg.synth)) {
          py::dict d;
          d["data"] = item.recording.data;
          d["channels"] = item.recording.channels;
          d["rate"] = item.recording.rate;
          d["state"] = std::string(to_string(item.recording.state));
          d["dataset"] = item.recording.dataset;
          d["split"] = item.split;
          out.append(d);
        }
        return out;
      },
      py::arg("config_path"), "Recordings (microvolts) from the [synth] section of a config.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        GradCheckOptions opts;
        opts.seed = seed;
        py::list out;
        for (const auto& r : run_gradcheck(opts)) {
          py::dict d;
          d["group"] = r.group;
          d["name"] = r.name;
          d["rel_error"] = r.rel_error;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0);

  py::class_<Model>(m, "Model", "A pre-trained checkpoint used as a feature extractor.")
      .def(py::init<const std::filesystem::path&>(), py::arg("path"))
      .def("encode", &Model::encode, py::arg("x"), py::arg("channels"), py::arg("encoder") = "shared",
           "Tokens (N_p x d) of one window (C x T, 0.1 mV units, 200 Hz).")
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("epoch", &Model::epoch)
      .def_property_readonly("global_step", &Model::global_step);
}
