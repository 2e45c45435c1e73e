#ifndef LVMOGP_TEST_UTIL_HPP
#define LVMOGP_TEST_UTIL_HPP

#include <cmath>
#include <random>
#include <stdexcept>

#include "lvmogp/bound.hpp"

namespace lvmogp::test {

using Rng = std::mt19937_64;

inline Matrix randn(Rng& rng, Index r, Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix A(r, c);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
  return A;
}

inline Matrix randu(Rng& rng, Index r, Index c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix A(r, c);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = u(rng);
  return A;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Index uniform_int(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline Matrix random_spd(Rng& rng, Index n) {
  const Matrix A = randn(rng, n, n);
  return A * A.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

inline Matrix random_lower(Rng& rng, Index n, double scale) {
  Matrix L = randn(rng, n, n, 0.3 * scale).triangularView<Eigen::Lower>();
  for (Index i = 0; i < n; ++i) L(i, i) = scale * uniform(rng, 0.5, 1.5);
  return L;
}

inline Vector random_lengthscales(Rng& rng, Index q, double lo, double hi) {
  return randu(rng, q, 1, lo, hi).col(0);
}

/// Uniform points in [lo, hi]^Q with pairwise distance >= min_sep (rejection sampling).
inline Matrix spread_points(Rng& rng, Index M, Index Q, double lo, double hi, double min_sep) {
  Matrix Z(M, Q);
  Index filled = 0;
  for (int attempt = 0; filled < M; ++attempt) {
    if (attempt > 100000) throw std::runtime_error("spread_points: cannot place points");
    const Eigen::RowVectorXd z = randu(rng, 1, Q, lo, hi);
    bool ok = true;
    for (Index i = 0; i < filled && ok; ++i) ok = (Z.row(i) - z).norm() >= min_sep;
    if (ok) Z.row(filled++) = z;
  }
  return Z;
}

/// Inducing prior covariance as the model defines it: K(Z, Z) plus the base
/// jitter 1e-8 * mean(diag).
inline Matrix prior_kuu(const KernelParams& k, const Matrix& Z) {
  Matrix K = rbf_ard(k, Z, Z);
  K.diagonal().array() += 1e-8 * K.diagonal().mean();
  return K;
}

/// A random model with well-conditioned inducing covariances: inducing inputs
/// are at least one lengthscale apart, so both K_uu stay far from singular.
inline LvmogpModel random_model(Rng& rng, Index D, Index QH, Index QX, Index MH, Index MX,
                                bool per_condition_noise = false) {
  LvmogpModel m;
  m.kernel_x = KernelParams::rbf(uniform(rng, 0.5, 2.0), random_lengthscales(rng, QX, 0.4, 0.7));
  m.kernel_h = KernelParams::rbf(uniform(rng, 0.5, 2.0), random_lengthscales(rng, QH, 0.4, 0.7));
  m.noise_variance = randu(rng, per_condition_noise ? D : 1, 1, 0.1, 0.5).col(0);
  m.latent.means = randn(rng, D, QH);
  m.latent.variances = randu(rng, D, QH, 0.05, 0.8);
  const double wh = 1.0 + 0.6 * static_cast<double>(MH), wx = 1.0 + 0.6 * static_cast<double>(MX);
  m.inducing.Z_H = spread_points(rng, MH, QH, -wh, wh, 0.6);
  m.inducing.Z_X = spread_points(rng, MX, QX, -wx, wx, 0.6);
  m.q_u.mean = randn(rng, MX, MH);
  m.q_u.covH_chol = random_lower(rng, MH, 0.6);
  m.q_u.covX_chol = random_lower(rng, MX, 0.6);
  m.validate();
  return m;
}

inline GridObservations random_grid(Rng& rng, Index N, Index D, Index QX) {
  return {randu(rng, N, QX, -2.0, 2.0), randn(rng, N, D)};
}

/// Ragged data with 0..max_points points per condition and at least one point overall.
inline RaggedObservations random_ragged(Rng& rng, Index D, Index QX, Index max_points) {
  RaggedObservations r;
  for (Index d = 0; d < D; ++d) {
    const Index n = uniform_int(rng, 0, max_points);
    r.conditions.push_back({randu(rng, n, QX, -2.0, 2.0), randn(rng, n, 1).col(0)});
  }
  if (r.total_points() == 0) {
    r.conditions[0] = {randu(rng, 1, QX, -2.0, 2.0), randn(rng, 1, 1).col(0)};
  }
  return r;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

/// log N(y; 0, K), dense.
inline double gaussian_log_density(const Vector& y, const Matrix& K) {
  const Eigen::LLT<Matrix> llt(K);
  const Vector a = llt.matrixL().solve(y);
  const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * M_PI) + logdet + a.squaredNorm());
}

/// KL(N(m, S) || N(0, K)), dense.
inline double dense_kl(const Vector& m, const Matrix& S, const Matrix& K) {
  const Eigen::LLT<Matrix> lk(K), ls(S);
  const double ldk = 2.0 * Matrix(lk.matrixL()).diagonal().array().log().sum();
  const double lds = 2.0 * Matrix(ls.matrixL()).diagonal().array().log().sum();
  return 0.5 * (lk.solve(S).trace() + m.dot(lk.solve(m)) - static_cast<double>(m.size()) + ldk - lds);
}

/// Uncollapsed sparse-GP bound for one output with q(u) = N(m, S):
/// sum_n E_q[log N(y_n; f_n, s2)] - KL(q(u) || p(u)),
/// where f_n | u has mean k_n^T Kuu^-1 u and variance kff_n - k_n^T Kuu^-1 k_n.
inline double sparse_gp_bound(const Vector& y, const Matrix& Kfu, const Vector& kff,
                              const Matrix& Kuu, const Vector& m, const Matrix& S,
                              const Vector& noise) {
  const Eigen::LLT<Matrix> lk(Kuu);
  const Matrix A = lk.solve(Kfu.transpose()).transpose();  // Kfu Kuu^-1
  double f = 0.0;
  for (Index n = 0; n < y.size(); ++n) {
    const double s2 = noise[n];
    const double mu = A.row(n).dot(m);
    const double cond = kff[n] - A.row(n).dot(Kfu.row(n));
    const double qvar = (A.row(n) * S * A.row(n).transpose())(0, 0);
    f += -0.5 * std::log(2.0 * M_PI * s2) - 0.5 * ((y[n] - mu) * (y[n] - mu) + cond + qvar) / s2;
  }
  return f - dense_kl(m, S, Kuu);
}

}  // namespace lvmogp::test

#endif  // LVMOGP_TEST_UTIL_HPP
