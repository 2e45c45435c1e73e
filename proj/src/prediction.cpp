#include "lvmogp/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lvmogp/bound.hpp"
#include "lvmogp/optimize.hpp"
#include "lvmogp/psi_stats.hpp"

namespace lvmogp {

void clamp_variances(Vector& variance, const char* what) {
  for (Index i = 0; i < variance.size(); ++i) {
    if (variance[i] >= 0.0) continue;
    if (variance[i] >= -1e-10) {
      variance[i] = 0.0;
    } else {
      std::ostringstream os;
      os << what << ": negative predictive variance " << variance[i] << " at entry " << i;
      throw NumericalError(os.str());
    }
  }
}

namespace {

/// Inducing-side quantities shared by all prediction routines, built from
/// the whitened q(U) so that no inducing covariance is inverted explicitly.
struct Projections {
  Matrix LH, LX;  // Cholesky factors of the jittered K_uu per factor
  Matrix CH, CX;  // whitened covariance factors
  Matrix A;       // K_X^-1 M K_H^-1

  explicit Projections(const LvmogpModel& m) {
    LH = CholeskyFactor(kernel_matrix(m.kernel_h, m.inducing.Z_H, m.inducing.Z_H), "K_uu^H", true).lower();
    LX = CholeskyFactor(kernel_matrix(m.kernel_x, m.inducing.Z_X, m.inducing.Z_X), "K_uu^X", true).lower();
    const auto w = whiten_qu(m);
    CH = w.covH_chol;
    CX = w.covX_chol;
    A = ltsolve(LH, ltsolve(LX, w.mean).transpose()).transpose();
  }

  static Matrix lsolve(const Matrix& L, const Matrix& B) { return L.triangularView<Eigen::Lower>().solve(B); }
  static Matrix ltsolve(const Matrix& L, const Matrix& B) {
    return L.transpose().triangularView<Eigen::Upper>().solve(B);
  }
};

// Columns of L^{-1} k^T, one per row of k.
Matrix whitened_cross(const Matrix& L, const Matrix& k) { return Projections::lsolve(L, k.transpose()); }

Vector col_sq_norms(const Matrix& V) { return V.colwise().squaredNorm().transpose(); }

void check_inputs(const LvmogpModel& model, const Matrix& X) {
  model.validate();
  if (X.cols() != model.input_dims()) throw InvalidArgument("prediction inputs have the wrong dimension");
  if (!X.allFinite()) throw InvalidArgument("prediction inputs must be finite");
}

void check_pairs(const LvmogpModel& model, const Matrix& X, const Matrix& H) {
  check_inputs(model, X);
  if (H.cols() != model.latent_dims()) throw InvalidArgument("latent points have the wrong dimension");
  if (H.rows() != X.rows()) throw InvalidArgument("need one latent point per input");
}

}  // namespace

PredictiveMoments predict_given_latents(const LvmogpModel& model, const Matrix& X, const Matrix& H,
                                        const Vector& noise) {
  check_pairs(model, X, H);
  const Index P = X.rows();
  if (noise.size() != 0 && noise.size() != 1 && noise.size() != P) {
    throw InvalidArgument("noise must hold one value or one per prediction");
  }
  const Projections pr(model);
  const Matrix kx = kernel_matrix(model.kernel_x, X, model.inducing.Z_X);
  const Matrix kh = kernel_matrix(model.kernel_h, H, model.inducing.Z_H);
  PredictiveMoments out;
  out.mean = (kx * pr.A).cwiseProduct(kh).rowwise().sum();
  const Vector prior = kernel_diag(model.kernel_x, X).cwiseProduct(kernel_diag(model.kernel_h, H));
  const Matrix vh = whitened_cross(pr.LH, kh), vx = whitened_cross(pr.LX, kx);
  out.variance = prior - col_sq_norms(vh).cwiseProduct(col_sq_norms(vx)) +
                 col_sq_norms(pr.CH.transpose() * vh).cwiseProduct(col_sq_norms(pr.CX.transpose() * vx));
  clamp_variances(out.variance, "predict_given_latents");
  if (noise.size() == 1) out.variance.array() += noise[0];
  if (noise.size() == P) out.variance += noise;
  return out;
}

PredictiveCovariance predict_given_latents_full(const LvmogpModel& model, const Matrix& X,
                                                const Matrix& H) {
  check_pairs(model, X, H);
  const Projections pr(model);
  const Matrix kx = kernel_matrix(model.kernel_x, X, model.inducing.Z_X);
  const Matrix kh = kernel_matrix(model.kernel_h, H, model.inducing.Z_H);
  PredictiveCovariance out;
  out.mean = (kx * pr.A).cwiseProduct(kh).rowwise().sum();
  const Matrix prior =
      kernel_matrix(model.kernel_x, X, X).cwiseProduct(kernel_matrix(model.kernel_h, H, H));
  const Matrix vh = whitened_cross(pr.LH, kh), vx = whitened_cross(pr.LX, kx);
  const Matrix sh = pr.CH.transpose() * vh, sx = pr.CX.transpose() * vx;
  const Matrix q = (vh.transpose() * vh).cwiseProduct(vx.transpose() * vx);
  const Matrix s = (sh.transpose() * sh).cwiseProduct(sx.transpose() * sx);
  out.covariance = prior - q + s;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

namespace {

/// Moments of f(x_i) with h ~ q(h_{rows[i]}).
PredictiveMoments predict_under(const LvmogpModel& model, const LatentPosterior& q, const Matrix& X,
                                const std::vector<Index>& rows) {
  const Projections pr(model);
  const Matrix& Z = model.inducing.Z_H;
  const Matrix kx = kernel_matrix(model.kernel_x, X, model.inducing.Z_X);
  const Vector kxx = kernel_diag(model.kernel_x, X);
  const Matrix P1 = psi1(q, model.kernel_h, Z);
  const Matrix a_all = kx * pr.A;
  const Matrix vx = whitened_cross(pr.LX, kx);
  const Vector cx = col_sq_norms(vx);
  const Vector ex = col_sq_norms(pr.CX.transpose() * vx);
  const Matrix SH = pr.CH * pr.CH.transpose();

  const Index D = q.num_conditions();
  std::vector<Matrix> Phi(static_cast<std::size_t>(D));
  Vector trW(D), trB(D);
  std::vector<bool> ready(static_cast<std::size_t>(D), false);

  const Index P = X.rows();
  PredictiveMoments out{Vector(P), Vector(P)};
  for (Index i = 0; i < P; ++i) {
    const Index d = rows[static_cast<std::size_t>(i)];
    const auto du = static_cast<std::size_t>(d);
    if (!ready[du]) {
      Phi[du] = psi2_condition(q, model.kernel_h, Z, d);
      // tr(K_H^-1 Phi) and tr(K_H^-1 covH K_H^-1 Phi) via L_H^-1 Phi L_H^-T
      const Matrix T = Projections::lsolve(pr.LH, Phi[du]);
      const Matrix AH = Projections::lsolve(pr.LH, T.transpose());
      trW[d] = AH.trace();
      trB[d] = SH.cwiseProduct(AH).sum();
      ready[du] = true;
    }
    const Eigen::RowVectorXd a = a_all.row(i);
    const double mean = a.dot(P1.row(d));
    const double second = (a * Phi[du] * a.transpose())(0, 0) + kxx[i] * model.kernel_h.variance -
                          cx[i] * trW[d] + ex[i] * trB[d];
    out.mean[i] = mean;
    out.variance[i] = second - mean * mean;
  }
  clamp_variances(out.variance, "moment-matched prediction");
  return out;
}

}  // namespace

PredictiveMoments predict_existing_conditions(const LvmogpModel& model, const Matrix& X,
                                              const std::vector<Index>& condition_ids,
                                              bool with_noise) {
  check_inputs(model, X);
  if (static_cast<Index>(condition_ids.size()) != X.rows()) {
    throw InvalidArgument("need one condition id per input");
  }
  for (Index d : condition_ids) {
    if (d < 0 || d >= model.num_conditions()) {
      throw InvalidArgument("unknown condition id " + std::to_string(d));
    }
  }
  if (model.kernel_h.kind != KernelKind::rbf) {
    throw InvalidArgument("prediction under q(H) requires an RBF latent kernel");
  }
  auto out = predict_under(model, model.latent, X, condition_ids);
  if (with_noise) {
    for (Index i = 0; i < X.rows(); ++i) out.variance[i] += model.noise(condition_ids[static_cast<std::size_t>(i)]);
  }
  return out;
}

PredictiveMoments predict_with_latent(const LvmogpModel& model, const Matrix& X,
                                      const LatentPosterior& latent, double noise) {
  check_inputs(model, X);
  latent.validate();
  if (latent.num_conditions() != 1 || latent.dims() != model.latent_dims()) {
    throw InvalidArgument("predict_with_latent expects a single latent row of dimension Q_H");
  }
  auto out = predict_under(model, latent, X, std::vector<Index>(static_cast<std::size_t>(X.rows()), 0));
  if (noise > 0.0) out.variance.array() += noise;
  return out;
}

NewConditionResult infer_new_condition(const LvmogpModel& model, const Matrix& X, const Vector& y,
                                       const NewConditionOptions& options) {
  model.validate();
  const Index Q = model.latent_dims();
  if (X.rows() != y.size()) throw InvalidArgument("new condition: X and y lengths differ");
  if (X.rows() == 0) return {LatentPosterior::prior(1, Q), 0.0};
  if (X.cols() != model.input_dims()) throw InvalidArgument("new condition inputs have the wrong dimension");
  if (options.steps < 0) throw InvalidArgument("steps must be non-negative");

  LvmogpModel single = model;
  single.noise_variance = Vector::Constant(1, model.noise_variance.mean());
  single.latent = LatentPosterior::prior(1, Q);
  RaggedObservations data;
  data.conditions.push_back({X, y});

  // x = [means, log variances]
  const Objective objective = [&](const Vector& x, Vector* grad) {
    LvmogpModel m = single;
    for (Index q = 0; q < Q; ++q) {
      m.latent.means(0, q) = x[q];
      m.latent.variances(0, q) = std::exp(std::clamp(x[Q + q], -50.0, 50.0));
    }
    if (!grad) return evaluate_bound(m, data).total();
    ModelGradient g;
    const double f = evaluate_bound(m, data, {}, &g).total();
    grad->resize(2 * Q);
    for (Index q = 0; q < Q; ++q) {
      (*grad)[q] = g.latent_means(0, q);
      (*grad)[Q + q] = g.latent_log_variances(0, q);
    }
    return f;
  };

  std::vector<Vector> starts;
  starts.push_back(Vector::Zero(2 * Q));
  if (options.multi_start) {
    for (Index d = 0; d < model.num_conditions(); ++d) {
      Vector s(2 * Q);
      s.head(Q) = model.latent.means.row(d).transpose();
      s.tail(Q) = model.latent.variances.row(d).array().log().matrix().transpose();
      starts.push_back(s);
    }
  }
  OptimizeOptions opts;
  opts.kind = OptimizerKind::adam;
  opts.max_iters = options.steps;
  opts.learning_rate = options.learning_rate;
  opts.tolerance_window = 0;  // fixed step budget

  NewConditionResult best{LatentPosterior::prior(1, Q), -std::numeric_limits<double>::infinity()};
  for (const auto& s : starts) {
    const auto res = maximize(objective, s, opts);
    if (res.value > best.bound) {
      best.bound = res.value;
      for (Index q = 0; q < Q; ++q) {
        best.posterior.means(0, q) = res.x[q];
        best.posterior.variances(0, q) = std::exp(std::clamp(res.x[Q + q], -50.0, 50.0));
      }
    }
  }
  if (!std::isfinite(best.bound)) throw NumericalError("new condition: non-finite objective");
  return best;
}

}  // namespace lvmogp
