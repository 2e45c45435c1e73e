#include "lvmogp/optimize.hpp"

#include <cmath>
#include <limits>

#include <ceres/ceres.h>

namespace lvmogp {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "lbfgs"; }

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "lbfgs" || name == "l-bfgs") return OptimizerKind::lbfgs;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

namespace {

bool converged(const std::vector<double>& trace, const OptimizeOptions& o) {
  const auto n = static_cast<Index>(trace.size());
  if (o.tolerance_window < 1 || n <= o.tolerance_window) return false;
  const double now = trace.back();
  const double then = trace[static_cast<std::size_t>(n - 1 - o.tolerance_window)];
  return std::abs(now - then) <= o.tolerance * std::max(1.0, std::abs(now));
}

OptimizeResult adam(const Objective& objective, const Vector& x0, const OptimizeOptions& o,
                    const StepHook& hook) {
  OptimizeResult res;
  Vector x = x0;
  Vector g(x.size());
  Vector m1 = Vector::Zero(x.size());
  Vector m2 = Vector::Zero(x.size());

  auto eval = [&](Index iter) {
    double f;
    try {
      f = objective(x, &g);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(iter) + ": " + e.what(), e.matrix(), e.jitter());
    }
    if (!std::isfinite(f) || !g.allFinite()) {
      throw NumericalError("iteration " + std::to_string(iter) + ": non-finite bound or gradient");
    }
    return f;
  };

  double f = eval(0);
  res.trace.push_back(f);
  res.x = x;
  res.value = f;
  for (Index t = 1; t <= o.max_iters; ++t) {
    m1 = o.beta1 * m1 + (1.0 - o.beta1) * g;
    m2 = o.beta2 * m2 + (1.0 - o.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
    x.array() += o.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + o.epsilon);
    if (hook) hook(x);
    f = eval(t);
    res.trace.push_back(f);
    if (f > res.value) {
      res.value = f;
      res.x = x;
    }
    if (converged(res.trace, o)) break;
  }
  return res;
}

class NegatedObjective final : public ceres::FirstOrderFunction {
 public:
  NegatedObjective(const Objective& f, Index n) : f_(f), n_(n) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Vector x = Eigen::Map<const Vector>(parameters, n_);
    Vector g(n_);
    double value;
    try {
      value = f_(x, gradient ? &g : nullptr);
    } catch (const NumericalError&) {
      return false;
    }
    if (!std::isfinite(value) || (gradient && !g.allFinite())) return false;
    cost[0] = -value;
    if (gradient) Eigen::Map<Vector>(gradient, n_) = -g;
    return true;
  }

  int NumParameters() const override { return static_cast<int>(n_); }

 private:
  const Objective& f_;
  Index n_;
};

class TraceRecorder final : public ceres::IterationCallback {
 public:
  explicit TraceRecorder(std::vector<double>& trace) : trace_(trace) {}
  ceres::CallbackReturnType operator()(const ceres::IterationSummary& summary) override {
    if (summary.iteration > 0) trace_.push_back(-summary.cost);
    return ceres::SOLVER_CONTINUE;
  }

 private:
  std::vector<double>& trace_;
};

OptimizeResult lbfgs(const Objective& objective, const Vector& x0, const OptimizeOptions& o) {
  OptimizeResult res;
  const double f0 = objective(x0, nullptr);
  if (!std::isfinite(f0)) throw NumericalError("initial objective is not finite");
  res.trace.push_back(f0);
  res.x = x0;
  res.value = f0;
  if (o.max_iters == 0 || x0.size() == 0) return res;

  Vector x = x0;
  ceres::GradientProblem problem(new NegatedObjective(objective, x.size()));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_lbfgs_rank = static_cast<int>(o.lbfgs_rank);
  options.max_num_iterations = static_cast<int>(o.max_iters);
  options.function_tolerance = o.tolerance;
  options.gradient_tolerance = 1e-12;
  options.parameter_tolerance = 1e-14;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;
  TraceRecorder recorder(res.trace);
  options.callbacks.push_back(&recorder);
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, x.data(), &summary);
  const double f = objective(x, nullptr);
  if (std::isfinite(f) && f >= res.value) {
    res.value = f;
    res.x = x;
  }
  return res;
}

}  // namespace

OptimizeResult maximize(const Objective& objective, const Vector& x0, const OptimizeOptions& options,
                        const StepHook& hook) {
  if (options.max_iters < 0) throw InvalidArgument("max_iters must be non-negative");
  if (options.kind == OptimizerKind::adam) return adam(objective, x0, options, hook);
  return lbfgs(objective, x0, options);
}

}  // namespace lvmogp
