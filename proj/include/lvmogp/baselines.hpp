#ifndef LVMOGP_BASELINES_HPP
#define LVMOGP_BASELINES_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lvmogp/model.hpp"
#include "lvmogp/optimize.hpp"
#include "lvmogp/prediction.hpp"

namespace lvmogp {

/// Comparison models. All of them use a covariance of the form
///   cov(f(x, d), f(x', d')) = C[d, d'] * k_X(x, x')
/// and differ only in the condition covariance C:
///   gp_ind  C = I (independent outputs, shared hyperparameters)
///   lmc     C = B = L L^T, full rank (k_X variance fixed to 1)
///   gp_oh   RBF on [x, one-hot(d)]: C[d, e] = exp(-(1/l_d^2 + 1/l_e^2) / 2), d != e
///   gp_wo   every condition pooled into one
enum class BaselineKind { gp_ind, lmc, gp_oh, gp_wo };

std::string to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(std::string_view name);

struct BaselineConfig {
  OptimizerKind optimizer = OptimizerKind::lbfgs;
  Index max_iters = 300;
  double learning_rate = 0.01;  // Adam only
  double tolerance = 1e-7;
  std::uint64_t seed = 0;
  /// Exact inference up to this many training points, sparse above.
  Index exact_limit = 2000;
  /// Inducing inputs of the sparse path (chosen by k-means and kept fixed).
  Index num_inducing = 50;
};

struct BaselineModel {
  BaselineKind kind = BaselineKind::gp_ind;
  Index num_conditions = 0;
  KernelParams kernel_x;
  double noise_variance = 1.0;
  Matrix coreg_chol;          // lmc: D x D lower factor of B
  Vector onehot_lengthscales;  // gp_oh: one per condition

  // training data, flattened; grid_rows > 0 when it came from a grid
  Matrix X;
  Vector y;
  std::vector<Index> ids;
  Index grid_rows = 0;
  Matrix Z;  // inducing inputs when sparse
  bool sparse = false;

  /// The D x D condition covariance C (1 x 1 for gp_wo).
  Matrix condition_covariance() const;
  Index effective_conditions() const { return kind == BaselineKind::gp_wo ? 1 : num_conditions; }
};

/// Log marginal likelihood (exact) or collapsed sparse bound at the stored data.
double baseline_objective(const BaselineModel& model);

/// Initializes from the data (k_X from input spread, noise 0.1 var(y)) and
/// maximizes baseline_objective over the hyperparameters.
BaselineModel fit_baseline(BaselineKind kind, const ObservationSet& data, const BaselineConfig& config = {});

/// Builds an unfitted model at fixed hyperparameters; used by tests and by fit_baseline.
BaselineModel make_baseline(BaselineKind kind, const ObservationSet& data, const KernelParams& kernel_x,
                            double noise_variance, const BaselineConfig& config = {});

/// Predictive marginals of f at (X.row(i), condition_ids[i]) (plus noise on request).
PredictiveMoments predict_baseline(const BaselineModel& model, const Matrix& X,
                                   const std::vector<Index>& condition_ids, bool with_noise = false);

/// Prior covariance C kron K_X(X, X) over a grid, in column-major vec order.
Matrix baseline_prior_covariance(const BaselineModel& model, const Matrix& X);

/// Flattened view of the hyperparameters, for gradient checks.
Vector baseline_pack(const BaselineModel& model);
BaselineModel baseline_unpack(const BaselineModel& shape, const Vector& x);
/// Objective and gradient in baseline_pack coordinates.
double baseline_objective_grad(const BaselineModel& model, Vector& grad);

}  // namespace lvmogp

#endif  // LVMOGP_BASELINES_HPP
