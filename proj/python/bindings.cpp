#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lvmogp/baselines.hpp"
#include "lvmogp/bound.hpp"
#include "lvmogp/datasets.hpp"
#include "lvmogp/errors.hpp"
#include "lvmogp/experiments.hpp"
#include "lvmogp/prediction.hpp"
#include "lvmogp/psi_stats.hpp"
#include "lvmogp/serialize.hpp"
#include "lvmogp/training.hpp"

namespace py = pybind11;
using namespace lvmogp;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python wrapper does the dict conversion
json parse(const std::string& s) {
  try {
    return json::parse(s);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(e.what());
  }
}

py::tuple moments(const PredictiveMoments& p) { return py::make_tuple(p.mean, p.variance); }

}  // namespace

PYBIND11_MODULE(_lvmogp, m) {
  m.doc() = "Latent variable multiple output Gaussian processes (C++ core)";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<KernelParams>(m, "KernelParams")
      .def_static("rbf", &KernelParams::rbf, py::arg("variance"), py::arg("lengthscales"))
      .def_static("linear", &KernelParams::linear, py::arg("variance"), py::arg("lengthscales"))
      .def_property_readonly("kind", [](const KernelParams& k) { return to_string(k.kind); })
      .def_readwrite("variance", &KernelParams::variance)
      .def_readwrite("lengthscales", &KernelParams::lengthscales)
      .def("dims", &KernelParams::dims);

  m.def("kernel_matrix", &kernel_matrix, py::arg("kernel"), py::arg("A"), py::arg("B"));
  m.def("kernel_diag", &kernel_diag, py::arg("kernel"), py::arg("A"));
  m.def("kron_matvec", &kron_matvec, py::arg("A"), py::arg("B"), py::arg("x"));
  m.def("chol_solve", &chol_solve, py::arg("K"), py::arg("B"));

  py::class_<LatentPosterior>(m, "LatentPosterior")
      .def(py::init([](Matrix means, Matrix variances) {
             LatentPosterior q{std::move(means), std::move(variances)};
             q.validate();
             return q;
           }),
           py::arg("means"), py::arg("variances"))
      .def_readwrite("means", &LatentPosterior::means)
      .def_readwrite("variances", &LatentPosterior::variances);

  py::class_<PsiStatistics>(m, "PsiStatistics")
      .def_readonly("psi0", &PsiStatistics::psi0)
      .def_readonly("psi1", &PsiStatistics::psi1)
      .def_readonly("psi2", &PsiStatistics::psi2);
  m.def("psi_stats", &psi_stats, py::arg("q"), py::arg("kernel"), py::arg("Z"));

  py::class_<GridObservations>(m, "GridObservations")
      .def(py::init([](Matrix X, Matrix Y) {
             GridObservations g{std::move(X), std::move(Y)};
             g.validate();
             return g;
           }),
           py::arg("X"), py::arg("Y"))
      .def_readonly("X", &GridObservations::X)
      .def_readonly("Y", &GridObservations::Y);

  py::class_<RaggedObservations>(m, "RaggedObservations")
      .def(py::init([](const std::vector<std::pair<Matrix, Vector>>& conditions) {
             RaggedObservations r;
             for (const auto& [X, y] : conditions) r.conditions.push_back({X, y});
             if (!r.conditions.empty()) r.validate(r.conditions.front().X.cols());
             return r;
           }),
           py::arg("conditions"), "a list of (X_d, y_d) pairs, one per condition")
      .def("num_conditions", &RaggedObservations::num_conditions)
      .def("total_points", &RaggedObservations::total_points)
      .def_static("from_grid", &RaggedObservations::from_grid);

  py::class_<LvmogpModel>(m, "LvmogpModel")
      .def_readwrite("kernel_x", &LvmogpModel::kernel_x)
      .def_readwrite("kernel_h", &LvmogpModel::kernel_h)
      .def_readwrite("noise_variance", &LvmogpModel::noise_variance)
      .def_readwrite("latent", &LvmogpModel::latent)
      .def_property_readonly("Z_H", [](const LvmogpModel& mo) { return mo.inducing.Z_H; })
      .def_property_readonly("Z_X", [](const LvmogpModel& mo) { return mo.inducing.Z_X; })
      .def_property_readonly("qu_mean", [](const LvmogpModel& mo) { return mo.q_u.mean; })
      .def_property_readonly("qu_cov_h", [](const LvmogpModel& mo) { return mo.q_u.covH(); })
      .def_property_readonly("qu_cov_x", [](const LvmogpModel& mo) { return mo.q_u.covX(); })
      .def("num_conditions", &LvmogpModel::num_conditions)
      .def("latent_dims", &LvmogpModel::latent_dims)
      .def("input_dims", &LvmogpModel::input_dims)
      .def("to_json", [](const LvmogpModel& mo) { return to_json(mo).dump(); })
      .def_static("from_json", [](const std::string& s) { return lvmogp_from_json(parse(s)); });

  py::class_<BoundValue>(m, "BoundValue")
      .def_readonly("data_fit", &BoundValue::data_fit)
      .def_readonly("kl_qu", &BoundValue::kl_qu)
      .def_readonly("kl_qh", &BoundValue::kl_qh)
      .def_property_readonly("total", &BoundValue::total);

  m.def(
      "evaluate_bound",
      [](const LvmogpModel& mo, const ObservationSet& data, bool include_kl_qh) {
        return evaluate_bound(mo, data, BoundOptions{include_kl_qh});
      },
      py::arg("model"), py::arg("data"), py::arg("include_kl_qh") = true);
  m.def(
      "bound_reference",
      [](const LvmogpModel& mo, const GridObservations& g, bool kl) { return bound_reference(mo, g, BoundOptions{kl}); },
      py::arg("model"), py::arg("data"), py::arg("include_kl_qh") = true);
  m.def(
      "bound_efficient",
      [](const LvmogpModel& mo, const GridObservations& g, bool kl) { return bound_efficient(mo, g, BoundOptions{kl}); },
      py::arg("model"), py::arg("data"), py::arg("include_kl_qh") = true);
  m.def(
      "bound_missing",
      [](const LvmogpModel& mo, const RaggedObservations& r, bool kl) { return bound_missing(mo, r, BoundOptions{kl}); },
      py::arg("model"), py::arg("data"), py::arg("include_kl_qh") = true);

  m.def(
      "init_model",
      [](const ObservationSet& data, Index latent_dims, Index mh, Index mx, std::uint64_t seed, const std::string& init,
         bool per_condition_noise) {
        return init_model(data, latent_dims, mh, mx, seed,
                          InitOptions{init_strategy_from_string(init), per_condition_noise});
      },
      py::arg("data"), py::arg("latent_dims"), py::arg("num_latent_inducing"), py::arg("num_input_inducing"),
      py::arg("seed") = 0, py::arg("init") = "random", py::arg("per_condition_noise") = false);

  m.def(
      "fit",
      [](const LvmogpModel& mo, const ObservationSet& data, const std::string& config) {
        FitResult r;
        {
          py::gil_scoped_release nogil;
          r = fit(mo, data, train_config_from_json(parse(config)));
        }
        return py::make_tuple(r.model, r.trace);
      },
      py::arg("model"), py::arg("data"), py::arg("config") = "{}",
      "returns (model, trace); config is a training-options JSON text");
  m.def("train_config_defaults", [] { return to_json(TrainConfig{}).dump(); });

  m.def(
      "predict",
      [](const LvmogpModel& mo, const Matrix& X, const std::vector<Index>& ids, bool with_noise) {
        return moments(predict_existing_conditions(mo, X, ids, with_noise));
      },
      py::arg("model"), py::arg("X"), py::arg("ids"), py::arg("with_noise") = false);
  m.def(
      "predict_given_latents",
      [](const LvmogpModel& mo, const Matrix& X, const Matrix& H) { return moments(predict_given_latents(mo, X, H)); },
      py::arg("model"), py::arg("X"), py::arg("H"));
  m.def(
      "infer_new_condition",
      [](const LvmogpModel& mo, const Matrix& X, const Vector& y) {
        const auto r = infer_new_condition(mo, X, y);
        return py::make_tuple(r.posterior, r.bound);
      },
      py::arg("model"), py::arg("X"), py::arg("y"), "returns (posterior, bound)");
  m.def(
      "predict_with_latent",
      [](const LvmogpModel& mo, const Matrix& X, const LatentPosterior& q, double noise) {
        return moments(predict_with_latent(mo, X, q, noise));
      },
      py::arg("model"), py::arg("X"), py::arg("latent"), py::arg("noise") = 0.0);

  py::class_<BaselineModel>(m, "BaselineModel")
      .def_property_readonly("kind", [](const BaselineModel& b) { return to_string(b.kind); })
      .def_readonly("kernel_x", &BaselineModel::kernel_x)
      .def_readonly("noise_variance", &BaselineModel::noise_variance)
      .def("condition_covariance", &BaselineModel::condition_covariance)
      .def("objective", [](const BaselineModel& b) { return baseline_objective(b); })
      .def("to_json", [](const BaselineModel& b) { return to_json(b).dump(); });
  m.def(
      "fit_baseline",
      [](const std::string& kind, const ObservationSet& data, Index max_iters, std::uint64_t seed) {
        BaselineConfig c;
        c.max_iters = max_iters;
        c.seed = seed;
        py::gil_scoped_release nogil;
        return fit_baseline(baseline_kind_from_string(kind), data, c);
      },
      py::arg("kind"), py::arg("data"), py::arg("max_iters") = 300, py::arg("seed") = 0);
  m.def(
      "predict_baseline",
      [](const BaselineModel& b, const Matrix& X, const std::vector<Index>& ids, bool with_noise) {
        return moments(predict_baseline(b, X, ids, with_noise));
      },
      py::arg("model"), py::arg("X"), py::arg("ids"), py::arg("with_noise") = false);

  py::class_<TestSet>(m, "TestSet")
      .def_readonly("X", &TestSet::X)
      .def_readonly("y", &TestSet::y)
      .def_readonly("ids", &TestSet::ids);
  py::class_<TabularDataset>(m, "TabularDataset")
      .def_readonly("name", &TabularDataset::name)
      .def_readonly("train", &TabularDataset::train)
      .def_readonly("test", &TabularDataset::test)
      .def_readonly("condition_names", &TabularDataset::condition_names)
      .def_property_readonly("metadata", [](const TabularDataset& d) { return d.metadata.dump(); });

  m.def(
      "gen_synthetic_grid",
      [](std::uint64_t seed, Index num_inputs, Index num_conditions) {
        SyntheticSpec s;
        s.seed = seed;
        s.num_inputs = num_inputs;
        s.num_conditions = num_conditions;
        const auto d = gen_synthetic_grid(s);
        return py::make_tuple(d.data, d.latent);
      },
      py::arg("seed") = 0, py::arg("num_inputs") = 100, py::arg("num_conditions") = 40,
      "returns (dataset, true latent inputs)");
  m.def(
      "gen_synthetic_missing",
      [](std::uint64_t seed) {
        SyntheticSpec s;
        s.seed = seed;
        const auto d = gen_synthetic_missing(s);
        return py::make_tuple(d.data, d.latent);
      },
      py::arg("seed") = 0);
  m.def(
      "gen_braking_toy",
      [](std::uint64_t seed) {
        BrakingSpec s;
        s.seed = seed;
        const auto b = gen_braking_toy(s);
        return py::make_tuple(b.data, b.friction);
      },
      py::arg("seed") = 0, "returns (dataset, true friction coefficients)");
  m.def("load_generic_csv", &load_generic_csv, py::arg("path"));

  m.def(
      "run_experiment",
      [](const std::string& name, const std::string& overrides) {
        auto c = experiment_config_from_json(parse(overrides), ExperimentConfig::defaults(experiment_kind_from_string(name)));
        c.validate();
        py::gil_scoped_release nogil;
        return run_experiment(c).metrics().dump();
      },
      py::arg("name"), py::arg("config") = "{}", "returns the metrics JSON text");
}
