#include <doctest.h>

#include "lvmogp/baselines.hpp"
#include "lvmogp/prediction.hpp"
#include "test_util.hpp"

using namespace lvmogp;
using namespace lvmogp::test;

namespace {

constexpr BaselineKind kKinds[] = {BaselineKind::gp_ind, BaselineKind::lmc, BaselineKind::gp_oh, BaselineKind::gp_wo};

BaselineModel randomized(BaselineModel m, Rng& rng) {
  if (m.kind == BaselineKind::lmc) {
    m.kernel_x.variance = 1.0;
    m.coreg_chol = random_lower(rng, m.num_conditions, 1.0);
  }
  if (m.kind == BaselineKind::gp_oh) m.onehot_lengthscales = randu(rng, m.num_conditions, 1, 0.5, 2.0).col(0);
  return m;
}

double max_fd_error(const BaselineModel& m) {
  Vector g;
  baseline_objective_grad(m, g);
  const Vector x = baseline_pack(m);
  REQUIRE(g.size() == x.size());
  double worst = 0.0;
  const double h = 1e-5;
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (baseline_objective(baseline_unpack(m, xp)) - baseline_objective(baseline_unpack(m, xm))) / (2 * h);
    worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace

TEST_CASE("baseline gradients match finite differences on every path") {
  Rng rng(71);
  for (auto kind : kKinds) {
    CAPTURE(to_string(kind));
    const auto k = KernelParams::rbf(1.3, Vector::Constant(1, 0.8));
    const ObservationSet grid = random_grid(rng, 6, 3, 1);
    const ObservationSet ragged = random_ragged(rng, 3, 1, 5);
    CHECK(max_fd_error(randomized(make_baseline(kind, grid, k, 0.3), rng)) < 1e-4);
    CHECK(max_fd_error(randomized(make_baseline(kind, ragged, k, 0.3), rng)) < 1e-4);
    BaselineConfig sparse;
    sparse.exact_limit = 4;
    sparse.num_inducing = 4;
    CHECK(max_fd_error(randomized(make_baseline(kind, ragged, k, 0.3, sparse), rng)) < 1e-4);
    CHECK(max_fd_error(randomized(make_baseline(kind, grid, k, 0.3, sparse), rng)) < 1e-4);
  }
}

TEST_CASE("Kronecker and dense exact paths agree") {
  Rng rng(72);
  for (auto kind : kKinds) {
    const auto g = random_grid(rng, 5, 3, 1);
    const auto k = KernelParams::rbf(1.1, Vector::Constant(1, 0.9));
    const auto a = randomized(make_baseline(kind, g, k, 0.2), rng);
    auto b = make_baseline(kind, RaggedObservations::from_grid(g), k, 0.2);
    b.coreg_chol = a.coreg_chol;
    b.onehot_lengthscales = a.onehot_lengthscales;
    b.kernel_x = a.kernel_x;
    CHECK(rel_err(baseline_objective(a), baseline_objective(b)) < 1e-10);
    const Matrix Xs = randu(rng, 4, 1, -2, 2);
    const std::vector<Index> ids{0, 2, 1, 2};
    const auto pa = predict_baseline(a, Xs, ids), pb = predict_baseline(b, Xs, ids);
    CHECK((pa.mean - pb.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((pa.variance - pb.variance).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("LMC log marginal matches a dense Gaussian") {
  Rng rng(73);
  const auto g = random_grid(rng, 3, 2, 1);
  auto m = make_baseline(BaselineKind::lmc, g, KernelParams::rbf(1.0, Vector::Constant(1, 0.7)), 0.4);
  m.coreg_chol = random_lower(rng, 2, 1.0);
  const Matrix B = m.coreg_chol * m.coreg_chol.transpose();
  Matrix K = kron(B, rbf_ard(m.kernel_x, g.X, g.X));
  K.diagonal().array() += 0.4;
  const double expected = gaussian_log_density(vec(g.Y), K);
  CHECK(std::abs(baseline_objective(m) - expected) < 1e-9);
  CHECK((baseline_prior_covariance(m, g.X) - (K - 0.4 * Matrix::Identity(6, 6))).norm() < 1e-12);
  auto r = make_baseline(BaselineKind::lmc, RaggedObservations::from_grid(g), m.kernel_x, 0.4);
  r.coreg_chol = m.coreg_chol;
  CHECK(std::abs(baseline_objective(r) - expected) < 1e-9);
}

TEST_CASE("LMC with identity coregionalization is GP-ind") {
  Rng rng(74);
  const auto g = random_grid(rng, 7, 3, 2);
  Vector ls(2);
  ls << 0.8, 1.2;
  const auto k = KernelParams::rbf(1.0, ls);
  const auto lmc = make_baseline(BaselineKind::lmc, g, k, 0.1);  // L = I
  const auto ind = make_baseline(BaselineKind::gp_ind, g, k, 0.1);
  const Matrix Xs = randu(rng, 5, 2, -2, 2);
  const std::vector<Index> ids{0, 1, 2, 1, 0};
  const auto a = predict_baseline(lmc, Xs, ids), b = predict_baseline(ind, Xs, ids);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(baseline_objective(lmc) - baseline_objective(ind)) < 1e-8);
}

TEST_CASE("GP-WO on one condition is GP-ind") {
  Rng rng(75);
  const auto g = random_grid(rng, 8, 1, 1);
  const auto k = KernelParams::rbf(1.4, Vector::Constant(1, 0.6));
  const auto wo = make_baseline(BaselineKind::gp_wo, g, k, 0.2);
  const auto ind = make_baseline(BaselineKind::gp_ind, g, k, 0.2);
  const Matrix Xs = randu(rng, 4, 1, -2, 2);
  const std::vector<Index> ids(4, 0);
  const auto a = predict_baseline(wo, Xs, ids), b = predict_baseline(ind, Xs, ids);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("GP-WO pools conditions") {
  Rng rng(76);
  auto r = random_ragged(rng, 3, 1, 4);
  const auto k = KernelParams::rbf(1.0, Vector::Constant(1, 0.7));
  const auto wo = make_baseline(BaselineKind::gp_wo, r, k, 0.2);
  RaggedObservations pooled;
  pooled.conditions.push_back({wo.X, wo.y});
  const auto one = make_baseline(BaselineKind::gp_ind, pooled, k, 0.2);
  CHECK(std::abs(baseline_objective(wo) - baseline_objective(one)) < 1e-10);
}

TEST_CASE("sparse path with inducing inputs at the data equals exact inference") {
  Rng rng(77);
  const auto g = random_grid(rng, 5, 2, 1);
  const auto k = KernelParams::rbf(1.0, Vector::Constant(1, 1.0));
  BaselineConfig cfg;
  cfg.exact_limit = 3;
  cfg.num_inducing = 5;
  for (auto kind : {BaselineKind::gp_ind, BaselineKind::lmc, BaselineKind::gp_oh}) {
    auto exact = randomized(make_baseline(kind, g, k, 0.3), rng);
    auto sparse = make_baseline(kind, g, k, 0.3, cfg);
    REQUIRE(sparse.sparse);
    sparse.coreg_chol = exact.coreg_chol;
    sparse.onehot_lengthscales = exact.onehot_lengthscales;
    sparse.kernel_x = exact.kernel_x;
    CHECK(std::abs(baseline_objective(sparse) - baseline_objective(exact)) < 1e-6);
    const Matrix Xs = randu(rng, 3, 1, -2, 2);
    const std::vector<Index> ids{0, 1, 1};
    const auto a = predict_baseline(sparse, Xs, ids), b = predict_baseline(exact, Xs, ids);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("LVMOGP with a linear latent kernel reproduces LMC covariance") {
  Rng rng(78);
  const Index D = 3, N = 4;
  const Matrix X = randu(rng, N, 1, -2, 2);
  const Matrix L = random_lower(rng, D, 1.0);
  auto lmc = make_baseline(BaselineKind::lmc, GridObservations{X, randn(rng, N, D)},
                           KernelParams::rbf(1.0, Vector::Constant(1, 0.8)), 0.1);
  lmc.coreg_chol = L;

  LvmogpModel m;
  m.kernel_x = lmc.kernel_x;
  m.kernel_h = KernelParams::linear(1.0, Vector::Ones(D));
  m.noise_variance = Vector::Constant(1, 0.1);
  m.latent = {L, Matrix::Constant(D, D, 1e-12)};  // point masses at the rows of L
  m.inducing.Z_H = Matrix::Identity(D, D);
  m.inducing.Z_X = X;
  m.q_u.mean = Matrix::Zero(N, D);
  m.q_u.covH_chol = Matrix::Identity(D, D);  // K^H_uu = I
  m.q_u.covX_chol = Eigen::LLT<Matrix>(rbf_ard(m.kernel_x, X, X)).matrixL();

  Matrix Xp(N * D, 1), Hp(N * D, D);
  for (Index d = 0; d < D; ++d)
    for (Index n = 0; n < N; ++n) {
      Xp.row(d * N + n) = X.row(n);
      Hp.row(d * N + n) = L.row(d);
    }
  const auto pred = predict_given_latents_full(m, Xp, Hp);
  CHECK((pred.covariance - baseline_prior_covariance(lmc, X)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fit_baseline improves the objective") {
  Rng rng(79);
  const auto g = random_grid(rng, 12, 3, 1);
  for (auto kind : kKinds) {
    const ObservationSet data = g;
    const auto fitted = fit_baseline(kind, data);
    BaselineConfig none;
    none.max_iters = 0;
    const auto start = fit_baseline(kind, data, none);
    CHECK(baseline_objective(fitted) >= baseline_objective(start));
  }
  CHECK(baseline_kind_from_string("gp-oh") == BaselineKind::gp_oh);
  CHECK_THROWS_AS(baseline_kind_from_string("gp"), InvalidArgument);
}

TEST_CASE("baseline prediction rejects unknown conditions") {
  Rng rng(80);
  const auto m = make_baseline(BaselineKind::gp_ind, random_grid(rng, 4, 2, 1), KernelParams::rbf(1.0, Vector::Ones(1)), 0.1);
  CHECK_THROWS_AS(predict_baseline(m, Matrix::Zero(1, 1), {2}), InvalidArgument);
}
