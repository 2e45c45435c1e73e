#include "lvmogp/psi_stats.hpp"

#include <cmath>
#include <random>

namespace lvmogp {

LatentPosterior LatentPosterior::prior(Index num_conditions, Index dims) {
  return {Matrix::Zero(num_conditions, dims), Matrix::Ones(num_conditions, dims)};
}

void LatentPosterior::validate() const {
  if (means.rows() < 1 || means.cols() < 1) throw InvalidArgument("latent posterior must be non-empty");
  if (variances.rows() != means.rows() || variances.cols() != means.cols()) {
    throw InvalidArgument("latent means and variances have different shapes");
  }
  if (!means.allFinite() || !variances.allFinite() || variances.minCoeff() <= 0.0) {
    throw InvalidArgument("latent variances must be positive and finite");
  }
}

LatentPosterior LatentPosterior::row(Index d) const {
  return {means.row(d), variances.row(d)};
}

namespace {

void check_inputs(const LatentPosterior& q, const KernelParams& k, const Matrix& Z) {
  q.validate();
  k.validate();
  if (k.dims() != q.dims() || Z.cols() != q.dims()) {
    throw InvalidArgument("psi statistics: latent dimension mismatch between q(H), kernel and Z");
  }
}

}  // namespace

double psi0(const LatentPosterior& q, const KernelParams& k) {
  q.validate();
  k.validate();
  if (k.dims() != q.dims()) throw InvalidArgument("psi0: latent dimension mismatch");
  if (k.kind == KernelKind::rbf) return static_cast<double>(q.num_conditions()) * k.variance;
  const Eigen::ArrayXd inv_l2 = k.lengthscales.array().square().inverse();
  const Matrix second = q.means.array().square() + q.variances.array();
  return k.variance * (second * inv_l2.matrix()).sum();
}

Matrix psi1(const LatentPosterior& q, const KernelParams& k, const Matrix& Z) {
  check_inputs(q, k, Z);
  const Index D = q.num_conditions();
  const Index M = Z.rows();
  const Index Q = q.dims();
  const Eigen::ArrayXd l2 = k.lengthscales.array().square();
  if (k.kind == KernelKind::linear) {
    return k.variance * q.means * l2.inverse().matrix().asDiagonal() * Z.transpose();
  }
  Matrix P(D, M);
  for (Index d = 0; d < D; ++d) {
    double log_norm = 0.0;
    for (Index q_ = 0; q_ < Q; ++q_) log_norm -= 0.5 * std::log1p(q.variances(d, q_) / l2[q_]);
    for (Index m = 0; m < M; ++m) {
      double e = 0.0;
      for (Index q_ = 0; q_ < Q; ++q_) {
        const double diff = q.means(d, q_) - Z(m, q_);
        e += diff * diff / (l2[q_] + q.variances(d, q_));
      }
      P(d, m) = k.variance * std::exp(log_norm - 0.5 * e);
    }
  }
  return P;
}

Matrix psi2_condition(const LatentPosterior& q, const KernelParams& k, const Matrix& Z, Index d) {
  check_inputs(q, k, Z);
  const Index M = Z.rows();
  const Index Q = q.dims();
  const Eigen::ArrayXd l2 = k.lengthscales.array().square();
  if (k.kind == KernelKind::linear) {
    const Eigen::VectorXd lam = l2.inverse().matrix();
    const Vector mu = q.means.row(d).transpose();
    Matrix second = mu * mu.transpose();
    second.diagonal() += q.variances.row(d).transpose();
    const Matrix ZL = Z * lam.asDiagonal();
    return k.variance * k.variance * ZL * second * ZL.transpose();
  }
  double log_norm = 0.0;
  for (Index q_ = 0; q_ < Q; ++q_) log_norm -= 0.5 * std::log1p(2.0 * q.variances(d, q_) / l2[q_]);
  const double v2 = k.variance * k.variance;
  Matrix P(M, M);
  for (Index m = 0; m < M; ++m) {
    for (Index mp = 0; mp <= m; ++mp) {
      double e = 0.0;
      for (Index q_ = 0; q_ < Q; ++q_) {
        const double dz = Z(m, q_) - Z(mp, q_);
        const double zbar = 0.5 * (Z(m, q_) + Z(mp, q_));
        const double dm = q.means(d, q_) - zbar;
        e += dz * dz / (4.0 * l2[q_]) + dm * dm / (l2[q_] + 2.0 * q.variances(d, q_));
      }
      P(m, mp) = P(mp, m) = v2 * std::exp(log_norm - e);
    }
  }
  return P;
}

std::vector<Matrix> psi2_per_condition(const LatentPosterior& q, const KernelParams& k,
                                       const Matrix& Z) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(q.num_conditions()));
  for (Index d = 0; d < q.num_conditions(); ++d) out.push_back(psi2_condition(q, k, Z, d));
  return out;
}

Matrix psi2(const LatentPosterior& q, const KernelParams& k, const Matrix& Z) {
  Matrix P = Matrix::Zero(Z.rows(), Z.rows());
  for (Index d = 0; d < q.num_conditions(); ++d) P += psi2_condition(q, k, Z, d);
  return P;
}

PsiStatistics psi_stats(const LatentPosterior& q, const KernelParams& k, const Matrix& Z) {
  return {psi0(q, k), psi1(q, k, Z), psi2(q, k, Z)};
}

PsiEstimate psi_stats_mc(const LatentPosterior& q, const KernelParams& k, const Matrix& Z,
                         Index n_samples, std::uint64_t seed) {
  check_inputs(q, k, Z);
  if (n_samples < 1) throw InvalidArgument("psi_stats_mc needs at least one sample");
  const Index D = q.num_conditions();
  const Index M = Z.rows();
  const Index Q = q.dims();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PsiEstimate est;
  est.value.psi0 = 0.0;
  est.value.psi1 = Matrix::Zero(D, M);
  est.value.psi2 = Matrix::Zero(M, M);
  est.psi1_se = Matrix::Zero(D, M);
  est.psi2_se = Matrix::Zero(M, M);
  double psi0_var = 0.0;
  Matrix psi2_var = Matrix::Zero(M, M);

  const double n = static_cast<double>(n_samples);
  Matrix h(2, Q);
  Vector eps(Q);
  for (Index d = 0; d < D; ++d) {
    double s0 = 0.0, ss0 = 0.0;
    Vector s1 = Vector::Zero(M), ss1 = Vector::Zero(M);
    Matrix s2 = Matrix::Zero(M, M), ss2 = Matrix::Zero(M, M);
    for (Index i = 0; i < n_samples; ++i) {
      for (Index q_ = 0; q_ < Q; ++q_) eps[q_] = normal(rng);
      const Eigen::ArrayXd scale = q.variances.row(d).transpose().array().sqrt();
      h.row(0) = q.means.row(d) + (scale * eps.array()).matrix().transpose();
      h.row(1) = q.means.row(d) - (scale * eps.array()).matrix().transpose();
      const Matrix kz = kernel_matrix(k, h, Z);  // 2 x M
      const Vector kd = kernel_diag(k, h);
      const double a0 = 0.5 * (kd[0] + kd[1]);
      const Vector a1 = 0.5 * (kz.row(0) + kz.row(1)).transpose();
      const Matrix a2 = 0.5 * (kz.row(0).transpose() * kz.row(0) + kz.row(1).transpose() * kz.row(1));
      s0 += a0;
      ss0 += a0 * a0;
      s1 += a1;
      ss1 += a1.cwiseProduct(a1);
      s2 += a2;
      ss2 += a2.cwiseProduct(a2);
    }
    const double m0 = s0 / n;
    const Vector m1 = s1 / n;
    const Matrix m2 = s2 / n;
    est.value.psi0 += m0;
    est.value.psi1.row(d) = m1.transpose();
    est.value.psi2 += m2;
    if (n_samples > 1) {
      const double denom = n * (n - 1.0);
      psi0_var += std::max(0.0, (ss0 - n * m0 * m0) / denom);
      est.psi1_se.row(d) =
          ((ss1 - n * m1.cwiseProduct(m1)) / denom).cwiseMax(0.0).cwiseSqrt().transpose();
      psi2_var += ((ss2 - n * m2.cwiseProduct(m2)) / denom).cwiseMax(0.0);
    }
  }
  est.psi0_se = std::sqrt(psi0_var);
  est.psi2_se = psi2_var.cwiseSqrt();
  return est;
}

void accumulate_psi0_gradient(const KernelParams& k, double psi0_value, double G,
                              PsiGradient& grad) {
  if (k.kind != KernelKind::rbf) throw InvalidArgument("psi gradients are implemented for RBF only");
  grad.kernel.log_variance += G * psi0_value;
}

void accumulate_psi1_gradient(const LatentPosterior& q, const KernelParams& k, const Matrix& Z,
                              const Matrix& P1, const Matrix& G, PsiGradient& grad) {
  if (k.kind != KernelKind::rbf) throw InvalidArgument("psi gradients are implemented for RBF only");
  const Index D = q.num_conditions();
  const Index M = Z.rows();
  const Index Q = q.dims();
  const Eigen::ArrayXd l2 = k.lengthscales.array().square();
  const Matrix W = G.cwiseProduct(P1);
  grad.kernel.log_variance += W.sum();
  for (Index d = 0; d < D; ++d) {
    for (Index q_ = 0; q_ < Q; ++q_) {
      const double s = q.variances(d, q_);
      const double a = l2[q_] + s;
      double g_mu = 0.0, g_s = 0.0, g_l = 0.0;
      for (Index m = 0; m < M; ++m) {
        const double w = W(d, m);
        if (w == 0.0) continue;
        const double diff = q.means(d, q_) - Z(m, q_);
        const double r = diff / a;
        g_mu -= w * r;
        grad.Z(m, q_) += w * r;
        g_s += w * (-0.5 / a + 0.5 * r * r);
        g_l += w * (1.0 - l2[q_] / a + l2[q_] * r * r);
      }
      grad.means(d, q_) += g_mu;
      grad.log_variances(d, q_) += s * g_s;
      grad.kernel.log_lengthscales[q_] += g_l;
    }
  }
}

void accumulate_psi2_gradient(const LatentPosterior& q, const KernelParams& k, const Matrix& Z,
                              std::span<const Matrix> G, PsiGradient& grad) {
  if (k.kind != KernelKind::rbf) throw InvalidArgument("psi gradients are implemented for RBF only");
  const Index D = q.num_conditions();
  if (G.size() != 1 && static_cast<Index>(G.size()) != D) {
    throw InvalidArgument("psi2 gradient: expected one shared or D per-condition matrices");
  }
  const Index M = Z.rows();
  const Index Q = q.dims();
  const Eigen::ArrayXd l2 = k.lengthscales.array().square();
  for (Index d = 0; d < D; ++d) {
    const Matrix& Gd = G.size() == 1 ? G[0] : G[static_cast<std::size_t>(d)];
    const Matrix W = Gd.cwiseProduct(psi2_condition(q, k, Z, d));
    grad.kernel.log_variance += 2.0 * W.sum();
    for (Index q_ = 0; q_ < Q; ++q_) {
      const double s = q.variances(d, q_);
      const double b = l2[q_] + 2.0 * s;
      const double mu = q.means(d, q_);
      double g_mu = 0.0, g_s = 0.0, g_l = 0.0;
      for (Index m = 0; m < M; ++m) {
        for (Index mp = 0; mp < M; ++mp) {
          const double w = W(m, mp);
          if (w == 0.0) continue;
          const double dz = Z(m, q_) - Z(mp, q_);
          const double dm = mu - 0.5 * (Z(m, q_) + Z(mp, q_));
          const double r = dm / b;
          g_mu -= 2.0 * w * r;
          g_s += w * (-1.0 / b + 2.0 * r * r);
          g_l += w * (1.0 - l2[q_] / b + dz * dz / (2.0 * l2[q_]) + 2.0 * l2[q_] * r * r);
          const double t = dz / (2.0 * l2[q_]);
          grad.Z(m, q_) += w * (r - t);
          grad.Z(mp, q_) += w * (r + t);
        }
      }
      grad.means(d, q_) += g_mu;
      grad.log_variances(d, q_) += s * g_s;
      grad.kernel.log_lengthscales[q_] += g_l;
    }
  }
}

}  // namespace lvmogp
