// One line per acceptance criterion; exit status is nonzero when any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "lvmogp/experiments.hpp"
#include "lvmogp/psi_stats.hpp"
#include "lvmogp/training.hpp"
#include "test_util.hpp"

using namespace lvmogp;
using namespace lvmogp::test;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ---- 1: bound equivalence --------------------------------------------------

Outcome equivalence() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst_ref = 0.0, worst_missing = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index N = uniform_int(rng, 1, 8), D = uniform_int(rng, 1, 8);
    const Index MX = uniform_int(rng, 1, 8), MH = uniform_int(rng, 1, 8);
    const Index QH = uniform_int(rng, 1, 3), QX = uniform_int(rng, 1, 2);
    const auto m = random_model(rng, D, QH, QX, MH, MX);
    const auto g = random_grid(rng, N, D, QX);
    const double eff = bound_efficient(m, g);
    worst_ref = std::max(worst_ref, rel_err(eff, bound_reference(m, g)));
    worst_missing = std::max(worst_missing, rel_err(bound_missing(m, RaggedObservations::from_grid(g)), eff));
  }
  const double secs = since(t0);
  return {worst_ref < 1e-8 && worst_missing < 1e-8 && secs < 10.0,
          "max rel err efficient/reference " + fmt(worst_ref) + ", missing/efficient " + fmt(worst_missing) +
              " (< 1e-8), " + fmt(secs) + " s (< 10 s)"};
}

// ---- 2: psi statistics vs Monte Carlo ----------------------------------------

Outcome psi_monte_carlo() {
  const auto t0 = Clock::now();
  Rng rng(2);
  double worst_z = 0.0;
  Index entries = 0, over = 0;
  constexpr Index kSamples = 1000000;
  const double eps = std::numeric_limits<double>::epsilon();
  for (int t = 0; t < 10; ++t) {
    const Index D = uniform_int(rng, 1, 4), Q = uniform_int(rng, 1, 3), M = uniform_int(rng, 1, 5);
    const LatentPosterior q{randn(rng, D, Q), randu(rng, D, Q, 0.05, 1.0)};
    const auto k = KernelParams::rbf(uniform(rng, 0.5, 2.0), random_lengthscales(rng, Q, 0.5, 1.5));
    const Matrix Z = randn(rng, M, Q);
    const auto exact = psi_stats(q, k, Z);
    const auto mc = psi_stats_mc(q, k, Z, kSamples, 1000 + static_cast<std::uint64_t>(t));
    auto check = [&](double a, double b, double se) {
      ++entries;
      if (se > 0.0) {
        const double z = std::abs(a - b) / se;
        worst_z = std::max(worst_z, z);
        if (z > 3.0) ++over;
      } else if (std::abs(a - b) > kSamples * eps * std::max(1.0, std::abs(a))) {
        // no sampling spread (psi0 of a stationary kernel): only the rounding of
        // a sequential sum over kSamples terms may differ
        ++over;
      }
    };
    check(exact.psi0, mc.value.psi0, mc.psi0_se);
    for (Index i = 0; i < exact.psi1.size(); ++i) check(exact.psi1.data()[i], mc.value.psi1.data()[i], mc.psi1_se.data()[i]);
    // psi2 is symmetric; compare the upper triangle once
    for (Index j = 0; j < M; ++j)
      for (Index i = 0; i <= j; ++i) check(exact.psi2(i, j), mc.value.psi2(i, j), mc.psi2_se(i, j));
  }
  double worst_delta = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Index D = uniform_int(rng, 1, 5), Q = uniform_int(rng, 1, 3), M = uniform_int(rng, 1, 6);
    const LatentPosterior q{randn(rng, D, Q), Matrix::Constant(D, Q, 1e-12)};
    const auto k = KernelParams::rbf(uniform(rng, 0.5, 2.0), random_lengthscales(rng, Q, 0.5, 2.0));
    const Matrix Z = randn(rng, M, Q);
    const Matrix Kfu = rbf_ard(k, q.means, Z);
    worst_delta = std::max({worst_delta, std::abs(psi0(q, k) - k.variance * static_cast<double>(D)),
                            (psi1(q, k, Z) - Kfu).cwiseAbs().maxCoeff(),
                            (psi2(q, k, Z) - Kfu.transpose() * Kfu).cwiseAbs().maxCoeff()});
  }
  const double secs = since(t0);
  return {over == 0 && worst_delta <= 1e-6 && secs < 60.0,
          std::to_string(over) + " of " + std::to_string(entries) + " entries beyond 3 SE (max z " + fmt(worst_z) +
              "), delta-limit error " + fmt(worst_delta) + " (<= 1e-6), " + fmt(secs) + " s (< 60 s)"};
}

// ---- 3: gradients vs finite differences --------------------------------------

double max_fd_error(const LvmogpModel& m, const ObservationSet& data) {
  const ParamLayout layout(m);
  const Vector x = layout.pack(m);
  const auto res = grad_bound(m, data);
  const double h = 1e-5;
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd =
        (evaluate_bound(layout.unpack(xp), data).total() - evaluate_bound(layout.unpack(xm), data).total()) / (2 * h);
    worst = std::max(worst, std::abs(res.grad[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  Rng rng(3);
  double worst_grid = 0.0, worst_missing = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index D = uniform_int(rng, 1, 5), MX = uniform_int(rng, 1, 5), MH = uniform_int(rng, 1, 5);
    const Index QH = uniform_int(rng, 1, 2), QX = uniform_int(rng, 1, 2), N = uniform_int(rng, 1, 6);
    worst_grid = std::max(worst_grid, max_fd_error(random_model(rng, D, QH, QX, MH, MX), random_grid(rng, N, D, QX)));
    const bool pcn = t % 2 == 1;
    worst_missing = std::max(worst_missing, max_fd_error(random_model(rng, D, QH, QX, MH, MX, pcn),
                                                         random_ragged(rng, D, QX, 5)));
  }
  const double secs = since(t0);
  return {worst_grid < 1e-4 && worst_missing < 1e-4 && secs < 120.0,
          "max rel err grid " + fmt(worst_grid) + ", missing " + fmt(worst_missing) + " (< 1e-4), " + fmt(secs) +
              " s (< 120 s)"};
}

// ---- 4: the collapsed-bound property ---------------------------------------

Outcome titsias() {
  Rng rng(4);
  double worst_gap = -1e300;  // max over instances of bound - log marginal
  for (int t = 0; t < 10; ++t) {
    const Index D = uniform_int(rng, 2, 8);
    const Index N = uniform_int(rng, 2, 64 / D);
    const Index QH = 2, MH = uniform_int(rng, 2, D), MX = uniform_int(rng, 2, std::max<Index>(N, 2));
    auto m = random_model(rng, D, QH, 1, MH, MX);
    m.latent.variances.setConstant(1e-12);
    const auto g = random_grid(rng, N, D, 1);
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::lbfgs;
    cfg.max_iters = 500;
    cfg.warmup_iters = 0;
    cfg.include_kl_qh = false;
    cfg.frozen = {ParamGroup::latent_means, ParamGroup::latent_variances};
    const auto fitted = fit(m, g, cfg).model;
    const double bound = evaluate_bound(fitted, g, BoundOptions{false}).total();
    const Matrix Kh = rbf_ard(fitted.kernel_h, fitted.latent.means, fitted.latent.means);
    const Matrix Kx = rbf_ard(fitted.kernel_x, g.X, g.X);
    Matrix K = kron(Kh, Kx);
    K.diagonal().array() += fitted.noise_variance[0];
    const double exact = gaussian_log_density(vec(g.Y), K);
    worst_gap = std::max(worst_gap, bound - exact);
  }
  return {worst_gap <= 1e-6, "max(bound - log marginal) over 10 instances " + fmt(worst_gap, 4) + " (<= 1e-6)"};
}

// ---- 5-9: experiments --------------------------------------------------------

ExperimentResult run(ExperimentKind kind, const std::string& dataset = {}) {
  auto c = ExperimentConfig::defaults(kind);
  c.repeats = 20;
  c.write_curves = false;
  c.dataset_path = dataset;
  return run_experiment(c, &std::cerr);
}

double mean_of(const ExperimentResult& r, ModelVariant v) {
  const auto it = r.summary.find(v);
  if (it == r.summary.end() || it->second.rmse.empty()) return std::nan("");
  return it->second.mean;
}

std::string summary(const ExperimentResult& r) {
  std::string s;
  for (auto v : r.config.variants) {
    const auto& ms = r.summary.at(v);
    if (!s.empty()) s += ", ";
    s += to_string(v) + " " + fmt(ms.mean) + "+-" + fmt(ms.std, 2);
    if (!ms.failures.empty()) s += " (" + std::to_string(ms.failures.size()) + " failed)";
  }
  return s;
}

Outcome synthetic_grid() {
  const auto r = run(ExperimentKind::synthetic_grid);
  const double lv = mean_of(r, ModelVariant::lvmogp), ind = mean_of(r, ModelVariant::gp_ind);
  const bool ok = std::abs(lv - 0.20) <= 0.05 && std::abs(ind - 0.24) <= 0.05 && lv < ind;
  return {ok, summary(r) + "; need lvmogp 0.20+-0.05, gp-ind 0.24+-0.05, lvmogp < gp-ind"};
}

Outcome synthetic_missing() {
  const auto r = run(ExperimentKind::synthetic_missing);
  const double lv = mean_of(r, ModelVariant::lvmogp);
  const bool ok = lv < mean_of(r, ModelVariant::gp_ind) && lv < mean_of(r, ModelVariant::lmc) &&
                  std::abs(lv - 0.30) <= 0.08;
  return {ok, summary(r) + "; need lvmogp below both and 0.30+-0.08"};
}

Outcome servo() {
  const char* path = std::getenv("LVMOGP_SERVO_CSV");
  if (!path || !std::filesystem::exists(path)) {
    return {false, "servo data unavailable (set LVMOGP_SERVO_CSV to the UCI servo table)"};
  }
  const auto r = run(ExperimentKind::servo, path);
  const double lv = mean_of(r, ModelVariant::lvmogp), lmc = mean_of(r, ModelVariant::lmc),
               oh = mean_of(r, ModelVariant::gp_oh), wo = mean_of(r, ModelVariant::gp_wo),
               ind = mean_of(r, ModelVariant::gp_ind);
  const bool ok = lv < lmc && lmc < oh && oh < wo && wo < ind && std::abs(lv - 0.52) <= 0.15;
  return {ok, summary(r) + "; need lvmogp < lmc < gp-oh < gp-wo < gp-ind and lvmogp 0.52+-0.15"};
}

Outcome sensor() {
  const std::string path = std::string(LVMOGP_DATA_DIR) + "/occupancy_sensors.csv";
  const auto r = run(ExperimentKind::sensor, path);
  const double lv = mean_of(r, ModelVariant::lvmogp), lmc = mean_of(r, ModelVariant::lmc),
               ind = mean_of(r, ModelVariant::gp_ind);
  return {lv < lmc && lmc < ind,
          summary(r) + " on the public occupancy substitute; need lvmogp < lmc < gp-ind (ordering only)"};
}

Outcome braking() {
  const auto r = run(ExperimentKind::braking_toy);
  const auto b = r.metrics()["braking_analysis"];
  const double r2 = b["mean_latent_r_squared"].get<double>();
  const double lv = b["mean_new_condition_rmse"]["lvmogp"].get<double>();
  const double wo = b["mean_new_condition_rmse"]["gp-wo"].get<double>();
  return {r2 > 0.9 && lv < wo, "mean R^2 " + fmt(r2) + " (> 0.9), one-shot rmse lvmogp " + fmt(lv) + " vs gp-wo " +
                                   fmt(wo) + " over 20 repeats"};
}

// ---- 10: scaling in N ------------------------------------------------------

Outcome scaling() {
  Rng rng(10);
  const Index D = 100, MX = 5, MH = 5;
  auto m = random_model(rng, D, 2, 1, MH, MX);
  const std::vector<Index> sizes = {200, 400, 800};
  std::vector<GridObservations> grids;
  for (Index N : sizes) grids.push_back(random_grid(rng, N, D, 1));
  // round robin over the sizes so slow drifts in machine speed hit all of them
  // alike; one untimed call per batch brings that grid back into cache
  const int rounds = 61, inner = 10;
  std::vector<std::vector<double>> times(sizes.size());
  volatile double sink = 0.0;
  for (int rep = 0; rep < rounds; ++rep) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      sink = sink + bound_efficient(m, grids[i]);
      const auto t0 = Clock::now();
      for (int k = 0; k < inner; ++k) sink = sink + bound_efficient(m, grids[i]);
      times[i].push_back(since(t0) / inner);
    }
  }
  std::vector<double> medians;
  for (auto& t : times) {
    std::nth_element(t.begin(), t.begin() + rounds / 2, t.end());
    medians.push_back(t[rounds / 2]);
  }
  const double r1 = medians[1] / medians[0], r2 = medians[2] / medians[1];
  const double lo = 2.0 / 1.5, hi = 3.0;
  const bool ok = r1 >= lo && r1 <= hi && r2 >= lo && r2 <= hi;
  return {ok, "median times " + fmt(medians[0] * 1e3) + " / " + fmt(medians[1] * 1e3) + " / " + fmt(medians[2] * 1e3) +
                  " ms for N = 200/400/800; doubling ratios " + fmt(r1) + ", " + fmt(r2) + " (need within [" +
                  fmt(lo) + ", " + fmt(hi) + "])"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"bound equivalence", equivalence},
      {"psi statistics vs Monte Carlo", psi_monte_carlo},
      {"gradient check", gradients},
      {"collapsed bound below the exact marginal", titsias},
      {"synthetic grid experiment", synthetic_grid},
      {"synthetic missing-data experiment", synthetic_missing},
      {"servo experiment", servo},
      {"sensor imputation", sensor},
      {"braking toy latent recovery", braking},
      {"linear scaling in N", scaling},
  };
  bool all = true;
  for (int c : selected) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(c - 1)];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << name << "): " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
