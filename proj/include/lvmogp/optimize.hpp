#ifndef LVMOGP_OPTIMIZE_HPP
#define LVMOGP_OPTIMIZE_HPP

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lvmogp/kernels.hpp"

namespace lvmogp {

enum class OptimizerKind { adam, lbfgs };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

struct OptimizeOptions {
  OptimizerKind kind = OptimizerKind::adam;
  Index max_iters = 2000;
  double learning_rate = 0.01;  // Adam only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Stop when |f_t - f_{t-window}| <= tolerance * max(1, |f_t|).
  double tolerance = 1e-6;
  Index tolerance_window = 10;
  Index lbfgs_rank = 20;
};

/// Objective to maximize. Writes the gradient into `grad` when non-null.
using Objective = std::function<double(const Vector& x, Vector* grad)>;
/// Called on the iterate after every Adam step (used for gauge fixing).
using StepHook = std::function<void(Vector& x)>;

struct OptimizeResult {
  Vector x;                   // best iterate seen
  double value = 0.0;         // objective at x
  std::vector<double> trace;  // trace[0] is the initial value, then one entry per iteration
};

/// Gradient ascent with Adam, or L-BFGS (Ceres line-search solver).
/// Adam propagates NumericalError from the objective annotated with the
/// iteration index; L-BFGS treats a failing trial point as an invalid step.
OptimizeResult maximize(const Objective& objective, const Vector& x0, const OptimizeOptions& options,
                        const StepHook& hook = {});

}  // namespace lvmogp

#endif  // LVMOGP_OPTIMIZE_HPP
