#ifndef LVMOGP_MODEL_HPP
#define LVMOGP_MODEL_HPP

#include <variant>
#include <vector>

#include "lvmogp/kernels.hpp"
#include "lvmogp/psi_stats.hpp"

namespace lvmogp {

struct InducingInputs {
  Matrix Z_H;  // M_H x Q_H
  Matrix Z_X;  // M_X x Q_X

  Index num_latent() const { return Z_H.rows(); }
  Index num_input() const { return Z_X.rows(); }
  /// Non-empty, finite, and no duplicated rows within either set.
  void validate() const;
};

/// q(U) = N(vec(mean), covH kron covX), covariances stored as lower factors.
struct KroneckerGaussian {
  Matrix mean;       // M_X x M_H
  Matrix covH_chol;  // M_H x M_H, lower triangular, positive diagonal
  Matrix covX_chol;  // M_X x M_X, lower triangular, positive diagonal

  Matrix covH() const { return covH_chol * covH_chol.transpose(); }
  Matrix covX() const { return covX_chol * covX_chol.transpose(); }
  void validate() const;
  /// Rescales the factors so that tr(covH) == M_H; covH kron covX is unchanged.
  void fix_gauge();
};

/// All N inputs observed under every one of the D conditions.
struct GridObservations {
  Matrix X;  // N x Q_X
  Matrix Y;  // N x D

  Index num_conditions() const { return Y.cols(); }
  void validate() const;
};

struct ConditionObservations {
  Matrix X;  // N_d x Q_X
  Vector y;  // N_d
};

/// Each condition observed at its own inputs; N_d may be zero.
struct RaggedObservations {
  std::vector<ConditionObservations> conditions;

  Index num_conditions() const { return static_cast<Index>(conditions.size()); }
  Index total_points() const;
  void validate(Index input_dims) const;
  static RaggedObservations from_grid(const GridObservations& grid);
};

using ObservationSet = std::variant<GridObservations, RaggedObservations>;

Index num_conditions(const ObservationSet& data);
Index input_dims(const ObservationSet& data);

struct LvmogpModel {
  KernelParams kernel_x;
  KernelParams kernel_h;
  /// One shared noise variance, or one per condition.
  Vector noise_variance;
  LatentPosterior latent;
  InducingInputs inducing;
  KroneckerGaussian q_u;

  Index num_conditions() const { return latent.num_conditions(); }
  Index latent_dims() const { return latent.dims(); }
  Index input_dims() const { return kernel_x.dims(); }
  bool per_condition_noise() const { return noise_variance.size() > 1; }
  double noise(Index d) const { return per_condition_noise() ? noise_variance[d] : noise_variance[0]; }

  void validate() const;
};

}  // namespace lvmogp

#endif  // LVMOGP_MODEL_HPP
