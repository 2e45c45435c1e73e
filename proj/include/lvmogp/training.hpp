#ifndef LVMOGP_TRAINING_HPP
#define LVMOGP_TRAINING_HPP

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lvmogp/bound.hpp"
#include "lvmogp/optimize.hpp"

namespace lvmogp {

/// Segments of the unconstrained parameter vector, in packing order.
enum class ParamGroup {
  kernel_x,          // log variance, log lengthscales
  kernel_h,          // log variance, log lengthscales
  noise,             // log noise variance(s)
  latent_means,      // D x Q_H
  latent_variances,  // log, D x Q_H
  inducing_h,        // Z_H
  inducing_x,        // Z_X
  qu_mean,           // M
  qu_cov_h,          // lower factor of covH, log diagonal
  qu_cov_x,          // lower factor of covX, log diagonal
};

inline constexpr std::array kAllParamGroups = {
    ParamGroup::kernel_x,   ParamGroup::kernel_h,   ParamGroup::noise,
    ParamGroup::latent_means, ParamGroup::latent_variances, ParamGroup::inducing_h,
    ParamGroup::inducing_x, ParamGroup::qu_mean,    ParamGroup::qu_cov_h,
    ParamGroup::qu_cov_x};

std::string to_string(ParamGroup group);
ParamGroup param_group_from_string(const std::string& name);

/// Maps an LvmogpModel to a flat vector of unconstrained reals and back.
/// Positive quantities go through log; SPD factors use a log diagonal.
class ParamLayout {
 public:
  struct Segment {
    ParamGroup group;
    Index offset;
    Index size;
  };

  explicit ParamLayout(const LvmogpModel& shape);

  Index size() const { return size_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(ParamGroup group) const;

  Vector pack(const LvmogpModel& model) const;
  /// Any finite vector yields a valid model (log values are clamped to [-100, 100]).
  LvmogpModel unpack(const Vector& x) const;
  /// Chain rule from a ModelGradient evaluated at `model` to the packed space.
  Vector pack_gradient(const LvmogpModel& model, const ModelGradient& grad) const;
  /// Rescales the q(U) factor segments so tr(covH) = M_H, in place.
  void fix_gauge(Vector& x) const;

 private:
  LvmogpModel shape_;
  std::vector<Segment> segments_;
  Index size_ = 0;
};

struct GradientResult {
  double bound = 0.0;
  Vector grad;
};

/// Bound and its gradient in ParamLayout(model) coordinates. Grid data uses the
/// Kronecker bound, ragged data the missing-data bound.
GradientResult grad_bound(const LvmogpModel& model, const ObservationSet& data,
                          const BoundOptions& options = {});

/// evaluate_bound_whitened and its gradient, packed with ParamLayout(whitened).
GradientResult grad_bound_whitened(const LvmogpModel& whitened, const ObservationSet& data,
                                   const BoundOptions& options = {});

enum class InitStrategy { random, pca };

std::string to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  Index max_iters = 2000;
  double learning_rate = 0.01;
  double tolerance = 1e-6;
  Index tolerance_window = 10;
  /// Iterations of the first phase, in which kernel hyperparameters and
  /// inducing inputs are held fixed.
  Index warmup_iters = 100;
  std::uint64_t seed = 0;
  InitStrategy init = InitStrategy::random;
  bool include_kl_qh = true;
  bool per_condition_noise = false;
  /// Start the first phase by setting q(U) to its closed-form optimum (see optimal_qu).
  bool analytic_qu = true;
  /// Optimize q(U) in whitened coordinates (see whiten_qu).
  bool whiten = true;
  /// Groups held fixed for the whole fit.
  std::set<ParamGroup> frozen;

  void validate() const;
};

struct FitResult {
  LvmogpModel model;
  /// Bound after every iteration; trace[0] is the initial bound.
  std::vector<double> trace;
};

FitResult fit(const LvmogpModel& model0, const ObservationSet& data, const TrainConfig& config);

/// The q(U) maximizing the bound with everything else fixed, computed in
/// whitened coordinates u = L v (L L^T = K_uu). The mean is exact; the
/// Kronecker covariance comes from alternating exact updates of its factors.
KroneckerGaussian optimal_qu(const LvmogpModel& model, const ObservationSet& data);

struct InitOptions {
  InitStrategy strategy = InitStrategy::random;
  bool per_condition_noise = false;
};

/// Data-driven starting point: k-means Z_X, N(0,1) Z_H, q(h_d) = N(N(0, 0.01), 0.5),
/// lengthscales from input spread, noise 0.1 var(Y), M = 0, covH = covX = 0.1 I.
LvmogpModel init_model(const ObservationSet& data, Index latent_dims, Index num_latent_inducing,
                       Index num_input_inducing, std::uint64_t seed, const InitOptions& options = {});

/// Lloyd's k-means with k-means++ seeding. Falls back to resampling rows with
/// small jitter when there are fewer distinct points than clusters.
Matrix kmeans(const Matrix& points, Index k, std::uint64_t seed, Index iterations = 50);

}  // namespace lvmogp

#endif  // LVMOGP_TRAINING_HPP
