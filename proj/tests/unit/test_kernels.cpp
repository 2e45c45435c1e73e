#include <doctest.h>

#include "lvmogp/kernels.hpp"
#include "test_util.hpp"

using namespace lvmogp;
using namespace lvmogp::test;

TEST_CASE("rbf_ard examples") {
  const auto k1 = KernelParams::rbf(1.0, Vector::Ones(1));
  CHECK(rbf_ard(k1, Matrix::Zero(1, 1), Matrix::Zero(1, 1))(0, 0) == 1.0);

  const auto k2 = KernelParams::rbf(2.0, Vector::Ones(1));
  CHECK(rbf_ard(k2, Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1e3))(0, 0) == doctest::Approx(0.0));

  Vector ls(2);
  ls << 2.0, 1.0;
  Matrix A = Matrix::Zero(1, 2), B(1, 2);
  B << 2.0, 1.0;
  CHECK(rbf_ard(KernelParams::rbf(1.0, ls), A, B)(0, 0) == doctest::Approx(0.367879).epsilon(1e-6));
}

TEST_CASE("rbf_ard errors") {
  const auto k = KernelParams::rbf(1.0, Vector::Ones(2));
  CHECK_THROWS_AS(rbf_ard(k, Matrix::Zero(2, 1), Matrix::Zero(2, 1)), InvalidArgument);
  CHECK_THROWS_AS(rbf_ard(KernelParams::rbf(-1.0, Vector::Ones(1)), Matrix::Zero(1, 1), Matrix::Zero(1, 1)),
                  InvalidArgument);
  CHECK_THROWS_AS(rbf_ard(KernelParams::rbf(1.0, Vector::Zero(1)), Matrix::Zero(1, 1), Matrix::Zero(1, 1)),
                  InvalidArgument);
  CHECK_THROWS_AS(rbf_ard(KernelParams::linear(1.0, Vector::Ones(1)), Matrix::Zero(1, 1), Matrix::Zero(1, 1)),
                  InvalidArgument);
}

TEST_CASE("rbf_ard symmetry and diagonal") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Index Q = uniform_int(rng, 1, 4);
    const auto k = KernelParams::rbf(uniform(rng, 0.1, 3.0), random_lengthscales(rng, Q, 0.1, 3.0));
    const Matrix A = randn(rng, uniform_int(rng, 1, 8), Q);
    const Matrix B = randn(rng, uniform_int(rng, 1, 8), Q);
    CHECK((rbf_ard(k, A, B) - rbf_ard(k, B, A).transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    const Matrix K = rbf_ard(k, A, A);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((K.diagonal().array() - k.variance).abs().maxCoeff() == 0.0);
    CHECK((kernel_diag(k, A).array() - k.variance).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("self-covariance plus jitter factorizes") {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const Index Q = uniform_int(rng, 1, 3);
    const auto k = KernelParams::rbf(uniform(rng, 0.1, 3.0), random_lengthscales(rng, Q, 0.05, 5.0));
    // includes near-duplicate points, which make K numerically singular
    Matrix A = randn(rng, uniform_int(rng, 2, 40), Q);
    A.row(1) = A.row(0).array() + 1e-9;
    const CholeskyFactor F(rbf_ard(k, A, A), "K");
    CHECK(F.jitter() > 0.0);
    CHECK(F.jitter() <= 1e-2 * k.variance * (1 + 1e-12));
    const Matrix L = F.lower();
    CHECK((L * L.transpose() - F.matrix()).norm() <= 1e-10 * F.matrix().norm());
  }
}

TEST_CASE("jitter policy") {
  const CholeskyFactor plain(4.0 * Matrix::Identity(3, 3), "K");
  CHECK(plain.jitter() == 0.0);
  // rank one: needs the first jitter level
  const CholeskyFactor ranked(Matrix::Constant(3, 3, 4.0), "K");
  CHECK(ranked.jitter() == doctest::Approx(4e-8));
}

TEST_CASE("factorization failure carries name and jitter") {
  Matrix K(2, 2);
  K << 1.0, 0.0, 0.0, -1.0;
  try {
    CholeskyFactor F(K, "K_test");
    FAIL("expected a NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.matrix() == "K_test");
  }
  Matrix K2(2, 2);
  K2 << 2.0, 0.0, 0.0, -1.0;  // mean diag 0.5
  try {
    chol_solve(K2, Matrix::Identity(2, 2));
    FAIL("expected a NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.jitter() == doctest::Approx(5e-3));
  }
}

TEST_CASE("asymmetric covariance is rejected") {
  Matrix K = Matrix::Identity(2, 2);
  K(0, 1) = 0.5;
  CHECK_THROWS_AS(CholeskyFactor(K, "K"), InvalidArgument);
}

TEST_CASE("chol_solve examples") {
  Rng rng(3);
  const Matrix B = randn(rng, 3, 2);
  CHECK((chol_solve(Matrix::Identity(3, 3), B) - B).norm() < 1e-7);
  CHECK(chol_solve(Matrix::Constant(1, 1, 4.0), Matrix::Constant(1, 1, 8.0))(0, 0) ==
        doctest::Approx(2.0).epsilon(1e-7));
  for (int t = 0; t < 10; ++t) {
    const Matrix K = random_spd(rng, 5);
    const Matrix R = randn(rng, 5, 3);
    const Matrix X = chol_solve(K, R);
    // the solve is against the jittered matrix; the residual includes the 1e-8 relative jitter
    CHECK((K * X - R).norm() < 1e-9);
  }
  CHECK_THROWS_AS(chol_solve(Matrix::Identity(3, 3), Matrix::Zero(2, 1)), InvalidArgument);
}

TEST_CASE("kron_matvec matches dense Kronecker product") {
  CHECK(kron_matvec(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 3.0), Vector::Ones(1))[0] == 6.0);
  Rng rng(4);
  const Vector x6 = randn(rng, 6, 1).col(0);
  CHECK(kron_matvec(Matrix::Identity(2, 2), Matrix::Identity(3, 3), x6) == x6);
  for (int t = 0; t < 50; ++t) {
    const Index p = uniform_int(rng, 1, 6), q = uniform_int(rng, 1, 6);
    const Index r = uniform_int(rng, 1, 6), s = uniform_int(rng, 1, 6);
    const Matrix A = randn(rng, p, q), B = randn(rng, r, s);
    const Vector x = randn(rng, q * s, 1).col(0);
    const Vector dense = kron(A, B) * x;
    CHECK((kron_matvec(A, B, x) - dense).norm() <= 1e-12 * std::max(1.0, dense.norm()));
  }
  CHECK_THROWS_AS(kron_matvec(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Ones(3)), InvalidArgument);
}

TEST_CASE("explicit Kronecker entries") {
  Matrix A(2, 2), B(2, 2);
  A << 1, 2, 3, 4;
  B << 0, 5, 6, 7;
  const Matrix K = kron(A, B);
  CHECK(K(0, 1) == 5.0);
  CHECK(K(3, 2) == 4.0 * 6.0);
  CHECK(K(2, 1) == 3.0 * 5.0);
}

TEST_CASE("vectorization convention") {
  Rng rng(5);
  const Matrix Y = randn(rng, 4, 3);
  const Vector v = vec(Y);
  for (Index n = 0; n < 4; ++n)
    for (Index d = 0; d < 3; ++d) CHECK(v[d * 4 + n] == Y(n, d));
  CHECK(unvec(v, 4, 3) == Y);
  CHECK_THROWS_AS(unvec(v, 5, 3), InvalidArgument);
}

TEST_CASE("linear kernel") {
  Vector ls(2);
  ls << 1.0, 2.0;
  const auto k = KernelParams::linear(3.0, ls);
  Matrix A(1, 2), B(1, 2);
  A << 1.0, 2.0;
  B << 3.0, 4.0;
  CHECK(kernel_matrix(k, A, B)(0, 0) == doctest::Approx(3.0 * (3.0 + 8.0 / 4.0)));
}

TEST_CASE("kernel gradient matches finite differences") {
  Rng rng(6);
  for (auto kind : {KernelKind::rbf, KernelKind::linear}) {
    const Index Q = 2;
    KernelParams k{kind, 1.3, random_lengthscales(rng, Q, 0.5, 1.5)};
    const Matrix A = randn(rng, 4, Q), B = randn(rng, 3, Q);
    const Matrix G = randn(rng, 4, 3);
    auto obj = [&](const KernelParams& kk, const Matrix& AA, const Matrix& BB) {
      return kernel_matrix(kk, AA, BB).cwiseProduct(G).sum();
    };
    KernelGradient grad(Q);
    Matrix dA = Matrix::Zero(4, Q), dB = Matrix::Zero(3, Q);
    accumulate_kernel_gradient(k, A, B, kernel_matrix(k, A, B), G, grad, &dA, &dB);
    const double h = 1e-6;
    auto fd_param = [&](auto mutate) {
      KernelParams kp = k, km = k;
      mutate(kp, h);
      mutate(km, -h);
      return (obj(kp, A, B) - obj(km, A, B)) / (2 * h);
    };
    CHECK(grad.log_variance == doctest::Approx(fd_param([](KernelParams& p, double e) { p.variance *= std::exp(e); })).epsilon(1e-6));
    for (Index q = 0; q < Q; ++q) {
      CHECK(grad.log_lengthscales[q] ==
            doctest::Approx(fd_param([q](KernelParams& p, double e) { p.lengthscales[q] *= std::exp(e); })).epsilon(1e-6));
    }
    for (Index i = 0; i < A.size(); ++i) {
      Matrix Ap = A, Am = A;
      Ap.data()[i] += h;
      Am.data()[i] -= h;
      CHECK(dA.data()[i] == doctest::Approx((obj(k, Ap, B) - obj(k, Am, B)) / (2 * h)).epsilon(1e-6));
    }
    for (Index i = 0; i < B.size(); ++i) {
      Matrix Bp = B, Bm = B;
      Bp.data()[i] += h;
      Bm.data()[i] -= h;
      CHECK(dB.data()[i] == doctest::Approx((obj(k, A, Bp) - obj(k, A, Bm)) / (2 * h)).epsilon(1e-6));
    }
  }
}
