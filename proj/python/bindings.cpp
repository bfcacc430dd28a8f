#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spongelab/data.hpp"
#include "spongelab/energy.hpp"
#include "spongelab/errors.hpp"
#include "spongelab/harness.hpp"
#include "spongelab/model.hpp"
#include "spongelab/pruning.hpp"
#include "spongelab/sponge.hpp"

namespace py = pybind11;
using namespace spongelab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
  const auto* p = a.data();
  return Tensor(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(p, p + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Dataset make_dataset(const Array& features, std::vector<int> labels, std::size_t num_classes,
                     std::string name) {
  Dataset d;
  d.features = to_tensor(features);
  d.labels = std::move(labels);
  if (num_classes == 0) {
    for (int y : d.labels) num_classes = std::max(num_classes, static_cast<std::size_t>(y + 1));
  }
  d.num_classes = num_classes;
  d.name = std::move(name);
  d.validate();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "spongelab native core";

  auto base = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  (void)base;

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("features"), py::arg("labels"),
           py::arg("num_classes") = 0, py::arg("name") = "array")
      .def_property_readonly("features", [](const Dataset& d) { return to_array(d.features); })
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_readonly("name", &Dataset::name)
      .def("__len__", &Dataset::size)
      .def_property_readonly("dim", &Dataset::dim)
      .def("class_counts", &Dataset::class_counts);

  m.def("synth_blobs", &synth_blobs, py::arg("n_per_class"), py::arg("num_classes"),
        py::arg("dim"), py::arg("spread"), py::arg("seed"));
  m.def("load_feature_csv", &load_feature_csv, py::arg("path"), py::arg("label_column") = "label");
  m.def(
      "window_series_csv",
      [](const std::filesystem::path& path, std::size_t window_len, std::size_t stride,
         bool flatten, const std::string& label_column) {
        return window_series_csv(path, {window_len, stride, flatten}, label_column);
      },
      py::arg("path"), py::arg("window_len"), py::arg("stride"), py::arg("flatten") = true,
      py::arg("label_column") = "label");
  m.def("window_count", &window_count);

  py::class_<MlpConfig>(m, "MlpConfig")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t classes) {
             return MlpConfig{input_dim, std::move(hidden), classes};
           }),
           py::arg("input_dim") = 0, py::arg("hidden_dims") = std::vector<std::size_t>{128, 64},
           py::arg("num_classes") = 0)
      .def_readwrite("input_dim", &MlpConfig::input_dim)
      .def_readwrite("hidden_dims", &MlpConfig::hidden_dims)
      .def_readwrite("num_classes", &MlpConfig::num_classes);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("test_split", &TrainConfig::test_split)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<SpongeConfig>(m, "SpongeConfig")
      .def(py::init([](double lambda, double sigma, double p, const std::string& mode) {
             return SpongeConfig{lambda, sigma, p, parse_poison_mode(mode)};
           }),
           py::arg("lambda_") = 1.0, py::arg("sigma") = 1e-5, py::arg("poison_fraction") = 0.0,
           py::arg("mode") = "per_sample")
      .def_readwrite("lambda_", &SpongeConfig::lambda)
      .def_readwrite("sigma", &SpongeConfig::sigma)
      .def_readwrite("poison_fraction", &SpongeConfig::poison_fraction);

  py::class_<MlpModel>(m, "MlpModel")
      .def_static("init", &MlpModel::init, py::arg("config"), py::arg("seed"))
      .def_static("from_json", &model_from_json)
      .def_static("load", &load_model)
      .def("to_json", &model_to_json)
      .def("save", [](const MlpModel& mm, const std::filesystem::path& p) { save_model(mm, p); })
      .def_property_readonly("config", &MlpModel::config)
      .def("weights", [](const MlpModel& mm) {
        py::list out;
        for (const auto& l : mm.layers()) out.append(to_array(l.weight));
        return out;
      })
      .def("biases", [](const MlpModel& mm) {
        py::list out;
        for (const auto& l : mm.layers()) out.append(to_array(l.bias));
        return out;
      })
      .def_property_readonly("neuron_mask", &MlpModel::neuron_mask)
      .def("masked_count", &MlpModel::masked_count)
      .def("checksum", &MlpModel::checksum)
      .def("logits", [](const MlpModel& mm, const Array& x) { return to_array(forward(mm, to_tensor(x)).logits); })
      .def("hidden_activations",
           [](const MlpModel& mm, const Array& x) {
             py::list out;
             for (const auto& h : forward(mm, to_tensor(x)).hidden_activations) out.append(to_array(h));
             return out;
           })
      .def("predict", [](const MlpModel& mm, const Array& x) { return predict(mm, to_tensor(x)); })
      .def("standardize",
           [](const MlpModel& mm, const Array& x) {
             return mm.scaler() ? to_array(mm.scaler()->apply(to_tensor(x))) : to_array(to_tensor(x));
           },
           "apply the training-set scaler stored with the model to raw features")
      .def("__eq__", [](const MlpModel& a, const MlpModel& b) { return a == b; });

  py::class_<EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &EpochStats::epoch)
      .def_readonly("train_loss", &EpochStats::train_loss)
      .def_readonly("train_ce", &EpochStats::train_ce)
      .def_readonly("train_acc", &EpochStats::train_acc)
      .def_readonly("test_acc", &EpochStats::test_acc)
      .def_readonly("mean_density", &EpochStats::mean_density);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("history", &TrainResult::history)
      .def_property_readonly("train_set", [](const TrainResult& r) { return r.data.train; })
      .def_property_readonly("test_set", [](const TrainResult& r) { return r.data.test; });

  m.def("train", &train, py::arg("dataset"), py::arg("mlp") = MlpConfig{0, {128, 64}, 0},
        py::arg("train_cfg") = TrainConfig{}, py::arg("sponge_cfg") = SpongeConfig{},
        py::call_guard<py::gil_scoped_release>());

  py::class_<EnergyReport>(m, "EnergyReport")
      .def_readonly("per_layer_density", &EnergyReport::per_layer_density)
      .def_readonly("mean_density", &EnergyReport::mean_density)
      .def_readonly("proxy_energy", &EnergyReport::proxy_energy)
      .def_readonly("worst_case_energy", &EnergyReport::worst_case_energy)
      .def_readonly("energy_ratio", &EnergyReport::energy_ratio)
      .def_readonly("latency_ops", &EnergyReport::latency_ops)
      .def("csv_row", &energy_csv_row);
  m.def(
      "energy_proxy",
      [](const MlpModel& mm, const Array& x, double thr) { return energy_proxy(mm, to_tensor(x), thr); },
      py::arg("model"), py::arg("x"), py::arg("threshold") = 0.0);

  m.def("weight_prune", &weight_prune, py::arg("model"), py::arg("rate"));
  m.def("neuron_prune", &neuron_prune, py::arg("model"), py::arg("rate"));
  m.def("compact", &compact, py::arg("model"));

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init<>())
      .def_static("from_json", &grid_spec_from_json)
      .def("to_json", &grid_spec_to_json)
      .def("cells_per_seed", &GridSpec::cells_per_seed)
      .def_readwrite("sponge_pcts", &GridSpec::sponge_pcts)
      .def_readwrite("prune_pcts", &GridSpec::prune_pcts)
      .def_readwrite("seeds", &GridSpec::seeds)
      .def_readwrite("jobs", &GridSpec::jobs);

  py::class_<ExperimentRecord>(m, "ExperimentRecord")
      .def_readonly("dataset", &ExperimentRecord::dataset)
      .def_readonly("sponge_pct", &ExperimentRecord::sponge_pct)
      .def_property_readonly("prune_type", [](const ExperimentRecord& r) { return to_string(r.prune_type); })
      .def_readonly("prune_pct", &ExperimentRecord::prune_pct)
      .def_readonly("test_acc", &ExperimentRecord::test_acc)
      .def_readonly("energy_ratio", &ExperimentRecord::energy_ratio)
      .def_readonly("proxy_energy", &ExperimentRecord::proxy_energy)
      .def_readonly("latency_ops", &ExperimentRecord::latency_ops)
      .def_readonly("wall_clock_s", &ExperimentRecord::wall_clock_s)
      .def_readonly("seed", &ExperimentRecord::seed);

  m.def(
      "run_grid", [](const GridSpec& s, const Dataset& d) { return run_grid(s, d); },
      py::arg("spec"), py::arg("dataset"), py::call_guard<py::gil_scoped_release>());
  m.def("records_to_csv", &records_to_csv);
  m.def("records_from_csv", &records_from_csv);
  m.def("emit_trend_svg", &emit_trend_svg, py::arg("records"), py::arg("metric"),
        py::arg("group_by"), py::arg("path"), py::arg("x_field") = "");
}
