#include "dagem/conditioning.hpp"
#include "dagem/datagen.hpp"
#include "dagem/errors.hpp"
#include "dagem/experiment.hpp"
#include "dagem/fitting.hpp"
#include "dagem/kiiveri_em.hpp"
#include "dagem/metrics.hpp"
#include "dagem/theory_checks.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace dagem;

namespace {

py::dict trace_to_dict(const EmTrace& trace) {
    py::list iterations;
    for (const auto& it : trace.iterations) {
        py::dict d;
        d["iteration"] = it.iteration;
        d["b"] = it.b;
        d["sigma2"] = it.sigma2;
        d["surrogate_before"] = it.surrogate_before;
        d["surrogate_after"] = it.surrogate_after;
        d["grad_norm"] = it.grad_norm;
        d["step_size"] = it.step_size;
        iterations.append(d);
    }
    py::dict out;
    out["initial_b"] = trace.initial_b;
    out["initial_sigma2"] = trace.initial_sigma2;
    out["iterations"] = iterations;
    out["converged"] = trace.termination == Termination::Converged;
    return out;
}

EmConfig em_from_json_text(const std::string& text) {
    return text.empty() ? EmConfig{} : em_config_from_json(Json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Domain-adaptive EM for a systematically missing node in a linear-Gaussian DAG";

    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
    static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const DataError& e) {
            py::set_error(data_error, e.what());
        } catch (const NumericalError& e) {
            py::set_error(numerical_error, e.what());
        }
    });

    py::class_<DagSpec>(m, "DagSpec")
        .def_readonly("names", &DagSpec::names)
        .def_readonly("parents", &DagSpec::parents)
        .def_readonly("topo_order", &DagSpec::topo_order)
        .def("index_of", [](const DagSpec& d, const std::string& name) { return d.index_of(name); })
        .def("__len__", &DagSpec::size);

    py::class_<SemParams>(m, "SemParams")
        .def(py::init([](const DagSpec& dag) { return make_params(dag); }))
        .def_readwrite("coefficients", &SemParams::coefficients)
        .def_readwrite("intercepts", &SemParams::intercepts)
        .def_readwrite("variances", &SemParams::variances);

    m.def("make_dag", &make_dag, py::arg("names"), py::arg("edges"));
    m.def("seven_node_example", [](double b1, double bx, double bz) {
        const SemModel model = seven_node_example({b1, bx, bz, 0.0});
        return py::make_tuple(model.dag, model.params);
    }, py::arg("beta_c1") = 1.0, py::arg("beta_x") = 1.0, py::arg("beta_z") = 1.0);
    m.def("sample", &sample, py::arg("params"), py::arg("dag"), py::arg("n"), py::arg("seed"));
    m.def("implied_covariance", [](const SemParams& p, const DagSpec& d) {
        const GaussianMoments g = implied_covariance(p, d);
        return py::make_tuple(g.mean, g.covariance, g.precision);
    });
    m.def("fit_dag_source", &fit_dag_source, py::arg("dag"), py::arg("data"));
    m.def("conditional_law", [](const SemParams& p, const DagSpec& d, int t) {
        const ConditionalLaw law = conditional_law(p, d, t);
        return py::make_tuple(law.weights, law.observed_mean, law.offset, law.variance);
    }, py::arg("params"), py::arg("dag"), py::arg("target"));
    m.def("impute", &impute_adapted, py::arg("params"), py::arg("dag"), py::arg("target"), py::arg("observed"));
    m.def("split_target", [](const Matrix& full, int t) {
        const TargetData d = split_target(full, t);
        return py::make_tuple(d.observed, d.truth);
    });
    m.def("adapt", [](const SemParams& p, const DagSpec& d, int t, const Matrix& obs, const std::string& em) {
        const AdaptResult r = adapt(p, d, t, obs, em_from_json_text(em));
        return py::make_tuple(r.params, trace_to_dict(r.trace));
    }, py::arg("params"), py::arg("dag"), py::arg("target"), py::arg("observed"), py::arg("em_json") = "");
    m.def("kiiveri_adapt", [](const SemParams& p, const DagSpec& d, int t, const Matrix& obs, const std::string& em) {
        const AdaptResult r = kiiveri_adapt(p, d, t, obs, em_from_json_text(em));
        return py::make_tuple(r.params, trace_to_dict(r.trace));
    }, py::arg("params"), py::arg("dag"), py::arg("target"), py::arg("observed"), py::arg("em_json") = "");
    m.def("metrics", [](const Vector& truth, const Vector& pred, double mean, double sd) {
        const Scores s = metrics(truth, pred, mean, sd);
        return py::dict(py::arg("mae") = s.mae, py::arg("rmse") = s.rmse, py::arg("r2") = s.r2);
    });
    m.def("louis_check", [](const SemParams& p, const DagSpec& d, int t, const Matrix& obs, double step) {
        const InformationReport r = louis_check(p, d, t, obs, step);
        return py::dict(py::arg("i_obs") = r.i_obs, py::arg("i_comp") = r.i_comp, py::arg("i_miss") = r.i_miss,
                        py::arg("residual") = r.residual);
    }, py::arg("params"), py::arg("dag"), py::arg("target"), py::arg("observed"), py::arg("fd_step") = 1e-3);
    m.def("run_experiment", [](const std::string& config_json) {
        const ExperimentReport r = run_experiment(experiment_config_from_json(Json::parse(config_json)));
        return report_json(r);
    }, py::arg("config_json"), "Runs an experiment from a JSON config string and returns the JSON report.");
}
