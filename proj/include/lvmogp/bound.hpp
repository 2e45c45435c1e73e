#ifndef LVMOGP_BOUND_HPP
#define LVMOGP_BOUND_HPP

#include "lvmogp/model.hpp"

namespace lvmogp {

struct BoundOptions {
  /// Subtract KL(q(H) || p(H)). Switched off when q(H) is held at point masses.
  bool include_kl_qh = true;
};

struct BoundValue {
  double data_fit = 0.0;  // F
  double kl_qu = 0.0;
  double kl_qh = 0.0;

  double total() const { return data_fit - kl_qu - kl_qh; }
};

/// d(bound)/d(model quantities). Positive quantities are differentiated with
/// respect to their logarithm; the q(U) covariances with respect to the full
/// (symmetric) matrices covH and covX.
struct ModelGradient {
  KernelGradient kernel_x;
  KernelGradient kernel_h;
  Vector log_noise;
  Matrix latent_means;
  Matrix latent_log_variances;
  Matrix Z_H;
  Matrix Z_X;
  Matrix mean;
  Matrix covH;
  Matrix covX;

  static ModelGradient zeros_like(const LvmogpModel& model);
};

/// Largest N*D and M_H*M_X accepted by bound_reference.
inline constexpr Index kReferenceSizeLimit = 1024;

/// KL(q(U) || p(U)) using the Kronecker structure of both Gaussians.
double kl_qu(const LvmogpModel& model);
/// KL(q(H) || N(0, I)) summed over conditions and latent dimensions.
double kl_qh(const LvmogpModel& model);

/// Dense evaluation that materializes every Kronecker product. Only for small
/// problems; throws InvalidArgument past kReferenceSizeLimit.
double bound_reference(const LvmogpModel& model, const GridObservations& data,
                       const BoundOptions& options = {});

/// Kronecker-factored evaluation on grid data.
double bound_efficient(const LvmogpModel& model, const GridObservations& data,
                       const BoundOptions& options = {});

/// Per-condition evaluation for data observed at condition-specific inputs.
double bound_missing(const LvmogpModel& model, const RaggedObservations& data,
                     const BoundOptions& options = {});

/// Per-condition data terms F_d of the missing-data bound.
Vector missing_data_terms(const LvmogpModel& model, const RaggedObservations& data);

/// Efficient bound (grid or missing, by the variant held), with an optional
/// analytic gradient.
BoundValue evaluate_bound(const LvmogpModel& model, const ObservationSet& data,
                          const BoundOptions& options = {}, ModelGradient* grad = nullptr);

/// Whitened q(U): mean = L_X W L_H^T and factors L_H C_H, L_X C_X, where
/// L_H, L_X are the Cholesky factors of K^H_uu and K^X_uu. Returns (W, C_H, C_X).
KroneckerGaussian whiten_qu(const LvmogpModel& model);
/// `whitened` holds a whitened q(U); returns the model with the ordinary one.
LvmogpModel unwhiten_qu(const LvmogpModel& whitened);

/// Same bound with model.q_u holding a whitened q(U). The q(U) gradients are
/// w.r.t. W, C_H C_H^T and C_X C_X^T; kernel and inducing-input gradients
/// include the dependence of L_H and L_X on them.
BoundValue evaluate_bound_whitened(const LvmogpModel& whitened, const ObservationSet& data,
                                   const BoundOptions& options = {}, ModelGradient* grad = nullptr);

}  // namespace lvmogp

#endif  // LVMOGP_BOUND_HPP
