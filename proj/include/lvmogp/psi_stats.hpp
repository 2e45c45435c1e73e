#ifndef LVMOGP_PSI_STATS_HPP
#define LVMOGP_PSI_STATS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "lvmogp/kernels.hpp"

namespace lvmogp {

/// Diagonal Gaussian posterior q(h_d) = N(means.row(d), diag(variances.row(d))).
struct LatentPosterior {
  Matrix means;      // D x Q_H
  Matrix variances;  // D x Q_H, strictly positive

  static LatentPosterior prior(Index num_conditions, Index dims);

  Index num_conditions() const { return means.rows(); }
  Index dims() const { return means.cols(); }
  void validate() const;
  /// Single-condition posterior holding row d.
  LatentPosterior row(Index d) const;
};

/// Expectations of latent kernel quantities under q(H):
///   psi0 = E[tr K_ff], psi1 = E[K_fu] (D x M), psi2 = E[K_fu^T K_fu] (M x M).
struct PsiStatistics {
  double psi0 = 0.0;
  Matrix psi1;
  Matrix psi2;
};

double psi0(const LatentPosterior& q, const KernelParams& k);
Matrix psi1(const LatentPosterior& q, const KernelParams& k, const Matrix& Z);
Matrix psi2(const LatentPosterior& q, const KernelParams& k, const Matrix& Z);
/// E[k(h_d, Z)^T k(h_d, Z)] for one condition; psi2 is the ordered sum of these.
Matrix psi2_condition(const LatentPosterior& q, const KernelParams& k, const Matrix& Z, Index d);
std::vector<Matrix> psi2_per_condition(const LatentPosterior& q, const KernelParams& k,
                                       const Matrix& Z);
PsiStatistics psi_stats(const LatentPosterior& q, const KernelParams& k, const Matrix& Z);

/// Monte-Carlo estimate with per-entry standard errors.
struct PsiEstimate {
  PsiStatistics value;
  double psi0_se = 0.0;
  Matrix psi1_se;
  Matrix psi2_se;
};

/// Antithetic Monte-Carlo oracle: each of the n_samples draws eps ~ N(0, I) is
/// evaluated at mu + sqrt(s) eps and mu - sqrt(s) eps. Standard errors come from
/// the spread of the pair averages. Deterministic for a given seed.
PsiEstimate psi_stats_mc(const LatentPosterior& q, const KernelParams& k, const Matrix& Z,
                         Index n_samples, std::uint64_t seed);

/// Gradient accumulators for the closed-form statistics (RBF only).
struct PsiGradient {
  Matrix means;          // D x Q_H
  Matrix log_variances;  // D x Q_H
  Matrix Z;              // M x Q_H
  KernelGradient kernel;

  PsiGradient(Index D, Index M, Index Q)
      : means(Matrix::Zero(D, Q)), log_variances(Matrix::Zero(D, Q)), Z(Matrix::Zero(M, Q)),
        kernel(Q) {}
};

/// Adds G_psi0 * dpsi0, where psi0 counts `rows` conditions.
void accumulate_psi0_gradient(const KernelParams& k, double psi0_value, double G,
                              PsiGradient& grad);
/// `P1` is psi1 at the current point, `G` = dObjective/dpsi1 (D x M).
void accumulate_psi1_gradient(const LatentPosterior& q, const KernelParams& k, const Matrix& Z,
                              const Matrix& P1, const Matrix& G, PsiGradient& grad);
/// `G` holds dObjective/dPhi_d either once (shared by every condition, as when the
/// objective depends on the summed psi2) or one matrix per condition.
void accumulate_psi2_gradient(const LatentPosterior& q, const KernelParams& k, const Matrix& Z,
                              std::span<const Matrix> G, PsiGradient& grad);

}  // namespace lvmogp

#endif  // LVMOGP_PSI_STATS_HPP
