#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mmlab/config.hpp"
#include "mmlab/errors.hpp"
#include "mmlab/harness.hpp"
#include "mmlab/mentormix.hpp"
#include "mmlab/nn.hpp"
#include "mmlab/noisegen.hpp"
#include "mmlab/selfcheck.hpp"
#include "mmlab/trainer.hpp"

namespace py = pybind11;
using namespace mmlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
    const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
    return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

py::dict split_to_dict(const NoisySplit& split) {
    auto pack = [&](const std::vector<LabeledExample>& xs, const char* prefix, py::dict& out) {
        Array features({static_cast<py::ssize_t>(xs.size()), static_cast<py::ssize_t>(split.dim)});
        auto f = features.mutable_unchecked<2>();
        std::vector<int> labels, provenance, arg;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            for (int k = 0; k < split.dim; ++k) f(static_cast<py::ssize_t>(i), k) = xs[i].features[static_cast<std::size_t>(k)];
            labels.push_back(xs[i].observed_label);
            provenance.push_back(static_cast<int>(xs[i].provenance));
            arg.push_back(xs[i].provenance_arg);
        }
        const std::string p(prefix);
        out[(p + "_features").c_str()] = features;
        out[(p + "_labels").c_str()] = py::array_t<int>(static_cast<py::ssize_t>(labels.size()), labels.data());
        out[(p + "_provenance").c_str()] = py::array_t<int>(static_cast<py::ssize_t>(provenance.size()), provenance.data());
        out[(p + "_provenance_arg").c_str()] = py::array_t<int>(static_cast<py::ssize_t>(arg.size()), arg.data());
    };
    py::dict out;
    pack(split.train, "train", out);
    pack(split.val, "val", out);
    out["noise_type"] = std::string(to_string(split.noise_type));
    out["noise_level"] = split.noise_level;
    out["num_classes"] = split.num_classes;
    return out;
}

py::dict run_to_dict(const RunResult& r) {
    py::list history;
    for (const auto& e : r.eval_history) {
        py::dict d;
        d["step"] = e.step;
        d["train_acc"] = e.train_acc;
        d["val_acc"] = e.val_acc;
        d["gamma"] = e.gamma;
        d["mean_weight"] = e.mean_weight;
        history.append(d);
    }
    py::dict out;
    out["peak"] = r.peak_accuracy;
    out["final"] = r.final_accuracy;
    out["drop"] = r.drop;
    out["fingerprint"] = r.fingerprint;
    out["steps"] = r.wall_steps;
    out["eval_history"] = history;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "MentorMix robust-training lab: noise generation, training and sweeps";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<DivergedError>(m, "DivergedError", PyExc_RuntimeError);
    py::register_exception<ResourceError>(m, "ResourceError", PyExc_RuntimeError);

    m.def("percentile", [](std::vector<double> v, double q) { return percentile(v, q); }, py::arg("values"),
          py::arg("q"), "Nearest-rank percentile.");
    m.def("sampling_distribution",
          [](std::vector<double> w, double t) { return sampling_distribution(w, t); }, py::arg("weights"),
          py::arg("temperature") = 1.0);
    m.def("threshold_weights", [](std::vector<double> l, double g) { return threshold_weights(l, g); },
          py::arg("losses"), py::arg("gamma"));
    m.def("adjust_lambda", &adjust_lambda, py::arg("lam"), py::arg("v"));
    m.def("corrupted_count", &corrupted_count, py::arg("percent"), py::arg("class_size"));
    m.def("softmax_ce", [](const Array& logits, const Array& targets) {
        return softmax_ce(to_matrix(logits), to_matrix(targets));
    }, py::arg("logits"), py::arg("targets"));

    m.def("resolve_config", [](const std::string& config, const std::vector<std::string>& overrides) {
        return config_to_json(load_config(config, overrides));
    }, py::arg("config") = "default", py::arg("overrides") = std::vector<std::string>{},
          "Fully resolved configuration as a JSON string.");

    m.def("generate_split", [](const std::string& config, const std::vector<std::string>& overrides) {
        return split_to_dict(make_config_split(load_config(config, overrides)));
    }, py::arg("config") = "default", py::arg("overrides") = std::vector<std::string>{});

    m.def("train", [](const std::string& config, const std::vector<std::string>& overrides) {
        const AppConfig cfg = load_config(config, overrides);
        const NoisySplit split = make_config_split(cfg);
        const TrainConfig t = make_train_config(cfg);
        py::gil_scoped_release release;
        RunResult r = train_run(split, t);
        py::gil_scoped_acquire acquire;
        return run_to_dict(r);
    }, py::arg("config") = "default", py::arg("overrides") = std::vector<std::string>{});

    m.def("sweep_csv", [](const std::string& config, const std::vector<std::string>& overrides) {
        const AppConfig cfg = load_config(config, overrides);
        const SweepSpec spec = make_sweep_spec(cfg);
        SweepResult r;
        {
            py::gil_scoped_release release;
            r = run_sweep(spec);
        }
        std::ostringstream out;
        export_csv(r, out, provenance_json(cfg));
        return out.str();
    }, py::arg("config") = "quick", py::arg("overrides") = std::vector<std::string>{},
          "Run a sweep and return its trials CSV.");

    m.def("render_table", [](const std::string& csv) {
        std::istringstream in(csv);
        const ParsedCsv parsed = parse_csv(in);
        std::ostringstream out;
        export_markdown_table(parsed.result, out, parsed.provenance);
        return out.str();
    }, py::arg("csv"), "Markdown tables for a trials CSV.");

    m.def("selftest", [] {
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& r : selfcheck::run_all()) out.emplace_back(r.name, r.passed, r.detail);
        return out;
    });
}
