#include <doctest.h>

#include "lvmogp/prediction.hpp"
#include "lvmogp/training.hpp"
#include "test_util.hpp"

using namespace lvmogp;
using namespace lvmogp::test;

namespace {

/// Dense evaluation of the predictive display with explicit Kronecker products.
PredictiveCovariance dense_prediction(const LvmogpModel& m, const Matrix& X, const Matrix& H) {
  const Matrix Kuu = kron(prior_kuu(m.kernel_h, m.inducing.Z_H),
                          prior_kuu(m.kernel_x, m.inducing.Z_X));
  const Index P = X.rows();
  Matrix Ksu(P, Kuu.rows());
  for (Index i = 0; i < P; ++i) {
    Ksu.row(i) = kron(rbf_ard(m.kernel_h, H.row(i), m.inducing.Z_H),
                      rbf_ard(m.kernel_x, X.row(i), m.inducing.Z_X));
  }
  const Matrix Kss = rbf_ard(m.kernel_x, X, X).cwiseProduct(rbf_ard(m.kernel_h, H, H));
  const Matrix Kinv = Kuu.inverse();
  const Matrix S = kron(m.q_u.covH(), m.q_u.covX());
  return {Ksu * Kinv * vec(m.q_u.mean),
          Kss - Ksu * Kinv * Ksu.transpose() + Ksu * Kinv * S * Kinv * Ksu.transpose()};
}

}  // namespace

TEST_CASE("prediction matches the dense display") {
  Rng rng(61);
  for (int t = 0; t < 10; ++t) {
    const auto m = random_model(rng, 3, 2, 1, 3, 4);
    const Matrix X = randu(rng, 5, 1, -2, 2);
    const Matrix H = randn(rng, 5, 2);
    const auto dense = dense_prediction(m, X, H);
    const auto fast = predict_given_latents(m, X, H);
    const auto full = predict_given_latents_full(m, X, H);
    const double scale = std::max(1.0, dense.covariance.cwiseAbs().maxCoeff());
    CHECK((fast.mean - dense.mean).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, dense.mean.cwiseAbs().maxCoeff()));
    CHECK((fast.variance - dense.covariance.diagonal()).cwiseAbs().maxCoeff() <= 1e-9 * scale);
    CHECK((full.covariance - dense.covariance).cwiseAbs().maxCoeff() <= 1e-9 * scale);
    CHECK((full.mean - fast.mean).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("prior q(U) recovers the prior") {
  Rng rng(62);
  auto m = random_model(rng, 2, 1, 1, 3, 4);
  m.q_u.mean.setZero();
  m.q_u.covH_chol = Eigen::LLT<Matrix>(prior_kuu(m.kernel_h, m.inducing.Z_H)).matrixL();
  m.q_u.covX_chol = Eigen::LLT<Matrix>(prior_kuu(m.kernel_x, m.inducing.Z_X)).matrixL();
  const Matrix X = randu(rng, 6, 1, -2, 2), H = randn(rng, 6, 1);
  const auto p = predict_given_latents(m, X, H);
  CHECK(p.mean.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((p.variance.array() - m.kernel_x.variance * m.kernel_h.variance).abs().maxCoeff() < 1e-9);
  const auto full = predict_given_latents_full(m, X, H);
  const Matrix prior = rbf_ard(m.kernel_x, X, X).cwiseProduct(rbf_ard(m.kernel_h, H, H));
  CHECK((full.covariance - prior).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("prediction at the inducing points interpolates M") {
  Rng rng(63);
  auto m = random_model(rng, 2, 2, 1, 3, 4);
  m.q_u.covH_chol *= 1e-6;
  m.q_u.covX_chol *= 1e-6;
  Matrix X(12, 1), H(12, 2);
  Vector expected(12);
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 4; ++b) {
      X.row(a * 4 + b) = m.inducing.Z_X.row(b);
      H.row(a * 4 + b) = m.inducing.Z_H.row(a);
      expected[a * 4 + b] = m.q_u.mean(b, a);
    }
  const auto p = predict_given_latents(m, X, H);
  // the base jitter eps on K_uu leaves a residual eps * K_uu^-1 M in the mean and ~eps in the variance
  const Matrix Kuu = kron(prior_kuu(m.kernel_h, m.inducing.Z_H), prior_kuu(m.kernel_x, m.inducing.Z_X));
  const double eps = 1e-8 * m.kernel_h.variance * m.kernel_x.variance;
  const double mean_tol = 4.0 * eps * (Kuu.inverse() * vec(m.q_u.mean)).cwiseAbs().maxCoeff();
  CHECK((p.mean - expected).cwiseAbs().maxCoeff() < std::max(mean_tol, 1e-12));
  CHECK(p.variance.maxCoeff() < 4.0 * eps);
}

TEST_CASE("noise is added on request") {
  Rng rng(64);
  const auto m = random_model(rng, 2, 1, 1, 2, 2);
  const Matrix X = randu(rng, 3, 1, -1, 1), H = randn(rng, 3, 1);
  const auto a = predict_given_latents(m, X, H);
  const auto b = predict_given_latents(m, X, H, Vector::Constant(1, 0.25));
  CHECK((b.variance - a.variance).isApproxToConstant(0.25));
  CHECK_THROWS_AS(predict_given_latents(m, X, H, Vector::Ones(2)), InvalidArgument);
}

TEST_CASE("existing-condition prediction in the delta limit") {
  Rng rng(65);
  auto m = random_model(rng, 3, 2, 1, 3, 4);
  m.latent.variances.setConstant(1e-14);
  const Matrix X = randu(rng, 6, 1, -2, 2);
  const std::vector<Index> ids{0, 1, 2, 2, 1, 0};
  Matrix H(6, 2);
  for (Index i = 0; i < 6; ++i) H.row(i) = m.latent.means.row(ids[static_cast<std::size_t>(i)]);
  const auto a = predict_existing_conditions(m, X, ids);
  const auto b = predict_given_latents(m, X, H);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(predict_existing_conditions(m, X, {0, 1, 2, 3, 0, 0}), InvalidArgument);
}

TEST_CASE("existing-condition moments agree with Monte Carlo over q(h)") {
  Rng rng(66);
  for (int t = 0; t < 3; ++t) {
    const auto m = random_model(rng, 2, 2, 1, 4, 4);
    const Matrix X = randu(rng, 4, 1, -2, 2);
    const std::vector<Index> ids{0, 1, 0, 1};
    const auto exact = predict_existing_conditions(m, X, ids);

    const Index S = 100000;
    Vector sum_m = Vector::Zero(4), sum_m2 = Vector::Zero(4), sum_s = Vector::Zero(4), sum_s2 = Vector::Zero(4);
    Vector sum_v = Vector::Zero(4);
    std::normal_distribution<double> n01;
    for (Index s = 0; s < S; ++s) {
      Matrix H(4, 2);
      for (Index i = 0; i < 4; ++i)
        for (Index q = 0; q < 2; ++q) {
          const Index d = ids[static_cast<std::size_t>(i)];
          H(i, q) = m.latent.means(d, q) + std::sqrt(m.latent.variances(d, q)) * n01(rng);
        }
      const auto p = predict_given_latents(m, X, H);
      const Vector second = p.variance + p.mean.cwiseProduct(p.mean);
      sum_m += p.mean;
      sum_m2 += p.mean.cwiseProduct(p.mean);
      sum_s += second;
      sum_s2 += second.cwiseProduct(second);
      sum_v += p.variance;
    }
    const double dS = static_cast<double>(S);
    const Vector mean = sum_m / dS, second = sum_s / dS;
    const Vector se_m = ((sum_m2 / dS - mean.cwiseProduct(mean)) / dS).cwiseSqrt();
    const Vector se_s = ((sum_s2 / dS - second.cwiseProduct(second)) / dS).cwiseSqrt();
    const Vector exact_second = exact.variance + exact.mean.cwiseProduct(exact.mean);
    for (Index i = 0; i < 4; ++i) {
      CHECK(std::abs(exact.mean[i] - mean[i]) <= 3.0 * se_m[i]);
      CHECK(std::abs(exact_second[i] - second[i]) <= 3.0 * se_s[i]);
      // law of total variance: Var_q[f] >= E_q[var(f | h)]
      CHECK(exact.variance[i] >= sum_v[i] / dS - 3.0 * se_s[i]);
    }
  }
}

TEST_CASE("new condition with no data returns the prior") {
  Rng rng(67);
  const auto m = random_model(rng, 2, 2, 1, 2, 3);
  const auto r = infer_new_condition(m, Matrix(0, 1), Vector(0));
  CHECK(r.posterior.means.isZero());
  CHECK(r.posterior.variances.isOnes());
}

TEST_CASE("new condition recovers a duplicated training condition") {
  Rng rng(68);
  const Index N = 20, D = 4;
  GridObservations g{randu(rng, N, 1, -2, 2), Matrix(N, D)};
  for (Index d = 0; d < D; ++d) {
    g.Y.col(d) = (1.5 * g.X.col(0).array() + 0.8 * d).sin().matrix() + 0.05 * randn(rng, N, 1).col(0);
  }
  const ObservationSet data = g;
  TrainConfig cfg;
  cfg.max_iters = 600;
  cfg.learning_rate = 0.03;
  const auto fitted = fit(init_model(data, 2, 4, 6, 2), data, cfg).model;
  for (Index d = 0; d < D; ++d) {
    const auto r = infer_new_condition(fitted, g.X, g.Y.col(d));
    CHECK((r.posterior.means.row(0) - fitted.latent.means.row(d)).norm() < 0.2);
  }
}
