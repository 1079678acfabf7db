#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vmclass/data.hpp"
#include "vmclass/error.hpp"
#include "vmclass/model.hpp"
#include "vmclass/random.hpp"
#include "vmclass/serialize.hpp"
#include "vmclass/spectral.hpp"
#include "vmclass/synth.hpp"
#include "vmclass/training.hpp"

namespace py = pybind11;
using namespace vmclass;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// A trained or freshly built network together with its input statistics.
struct Model {
    model::Network network;
    std::optional<data::Normalizer> normalizer;
    nlohmann::json metadata = nlohmann::json::object();
};

Tensor tensor_from(const DoubleArray& array) {
    Shape shape(array.shape(), array.shape() + array.ndim());
    return Tensor(shape, std::vector<double>(array.data(), array.data() + array.size()));
}

DoubleArray array_from(const Tensor& t) {
    DoubleArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict trace_to_dict(const data::VmTrace& t) {
    DoubleArray samples({static_cast<py::ssize_t>(t.timesteps), static_cast<py::ssize_t>(t.metric_count())});
    std::copy(t.samples.begin(), t.samples.end(), samples.mutable_data());
    py::dict d;
    d["vm_id"] = t.vm_id;
    d["label"] = t.class_label;
    d["samples"] = samples;
    return d;
}

data::VmTrace trace_from_dict(const py::dict& d) {
    data::VmTrace t;
    t.vm_id = d["vm_id"].cast<std::string>();
    t.class_label = d["label"].cast<int>();
    const auto samples = d["samples"].cast<DoubleArray>();
    if (samples.ndim() != 2 || samples.shape(1) != static_cast<py::ssize_t>(data::kMetricCount)) {
        throw DataError("trace '" + t.vm_id + "': samples must have shape (T, 16)");
    }
    t.timesteps = static_cast<std::size_t>(samples.shape(0));
    t.samples.assign(samples.data(), samples.data() + samples.size());
    t.metric_names.assign(data::metric_names().begin(), data::metric_names().end());
    return t;
}

std::vector<data::VmTrace> traces_from(const py::list& traces) {
    std::vector<data::VmTrace> out;
    for (const auto& item : traces) out.push_back(trace_from_dict(item.cast<py::dict>()));
    return out;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

DoubleArray model_forward(const Model& m, const DoubleArray& batch) {
    Tensor input = tensor_from(batch);
    if (m.normalizer) {
        const auto metrics = m.normalizer->mean.size();
        if (input.rank() != 3 || input.dim(2) != metrics) throw ShapeError("expected a batch of shape (N, W, 16)");
        auto x = input.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = (x[i] - m.normalizer->mean[i % metrics]) / m.normalizer->std[i % metrics];
        }
    }
    return array_from(m.network.infer(input));
}

py::tuple train_traces(const py::list& traces, std::size_t window, const std::string& variant, std::uint64_t seed,
                       std::size_t epochs) {
    const auto vm_traces = traces_from(traces);
    training::TrainConfig config;
    config.window = window;
    config.variant = model::parse_variant(variant);
    config.seed = seed;
    config.epochs = epochs;
    data::PipelineOptions pipeline;
    pipeline.window = window;
    pipeline.seed = derive_seed(seed, 0);

    data::PreparedData prepared;
    training::TrainResult result;
    training::EvalReport report;
    {
        py::gil_scoped_release release;
        prepared = data::prepare_dataset(vm_traces, pipeline);
        result = training::train(prepared.split, config);
        report = training::evaluate(result.best, prepared.split.test);
        report.epoch_of_best = result.best_epoch;
    }
    py::list history;
    for (const auto& r : result.history) {
        py::dict d;
        d["epoch"] = r.epoch;
        d["train_loss"] = r.train_loss;
        d["val_loss"] = r.val_loss;
        d["val_accuracy"] = r.val_accuracy;
        d["learning_rate"] = r.learning_rate;
        history.append(d);
    }
    Model m{std::move(result.best), prepared.split.normalizer, {{"variant", variant}, {"window", window}}};
    return py::make_tuple(std::move(m), history, to_python(training::report_to_json(report, false)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core bindings of the vmclass toolkit";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

    m.def("metric_names", [] {
        return std::vector<std::string>(data::metric_names().begin(), data::metric_names().end());
    });
    m.def("block_count", &model::block_count, py::arg("window"));
    m.def("fft", [](const std::vector<std::complex<double>>& x) { return spectral::fft(x); }, py::arg("signal"));
    m.def("magnitude_spectrum", [](const std::vector<double>& x) { return spectral::magnitude_spectrum(x); },
          py::arg("signal"));

    m.def(
        "synthesize",
        [](std::uint64_t seed, double separability, double noise_scale, std::size_t vms_per_class, std::size_t length) {
            auto config = data::default_synth_config();
            config.separability = separability;
            config.noise_scale = noise_scale;
            config.vms_per_class = vms_per_class;
            config.length = length;
            py::list out;
            for (const auto& t : data::synthesize(config, seed)) out.append(trace_to_dict(t));
            return out;
        },
        py::arg("seed") = 0, py::arg("separability") = 1.0, py::arg("noise_scale") = 1.0,
        py::arg("vms_per_class") = 4, py::arg("length") = 2016);

    m.def(
        "ingest",
        [](const std::filesystem::path& manifest) {
            py::list out;
            for (const auto& t : data::ingest_csv(manifest)) out.append(trace_to_dict(t));
            return out;
        },
        py::arg("manifest"));

    py::class_<Model>(m, "Model")
        .def(py::init([](std::size_t window, const std::string& variant, std::uint64_t seed) {
                 return Model{model::Network::build(model::make_spec(window, model::parse_variant(variant)), seed), {}, {}};
             }),
             py::arg("window"), py::arg("variant") = "deepconv", py::arg("seed") = 0)
        .def_property_readonly("window", [](const Model& self) { return self.network.spec().window; })
        .def_property_readonly("variant", [](const Model& self) {
            return std::string(model::variant_name(self.network.spec().variant));
        })
        .def_property_readonly("blocks", [](const Model& self) { return self.network.spec().blocks(); })
        .def_property_readonly("parameter_count", [](const Model& self) { return self.network.parameter_count(); })
        .def("forward", &model_forward, py::arg("batch"), "Eval-mode logits for a (N, W, 16) batch of raw metrics")
        .def("predict_proba", [](const Model& self, const DoubleArray& batch) {
            return array_from(nn::softmax(tensor_from(model_forward(self, batch))));
        }, py::arg("batch"))
        .def("save", [](const Model& self, const std::filesystem::path& path) {
            model::save(self.network, path, self.normalizer ? &*self.normalizer : nullptr, self.metadata);
        }, py::arg("path"))
        .def_static("load", [](const std::filesystem::path& path) {
            auto file = model::load_model_file(path);
            return Model{std::move(file.network), std::move(file.normalizer), std::move(file.metadata)};
        }, py::arg("path"));

    m.def("train", &train_traces, py::arg("traces"), py::arg("window") = 4, py::arg("variant") = "deepconv",
          py::arg("seed") = 0, py::arg("epochs") = 110,
          "Window, split, normalize and train; returns (model, history, test report)");
}
