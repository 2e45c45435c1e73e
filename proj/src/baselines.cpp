#include "lvmogp/baselines.hpp"

#include <cmath>
#include <random>

#include "lvmogp/training.hpp"

namespace lvmogp {

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::gp_ind: return "gp-ind";
    case BaselineKind::lmc: return "lmc";
    case BaselineKind::gp_oh: return "gp-oh";
    case BaselineKind::gp_wo: return "gp-wo";
  }
  return "unknown";
}

BaselineKind baseline_kind_from_string(std::string_view name) {
  if (name == "gp-ind" || name == "gp_ind") return BaselineKind::gp_ind;
  if (name == "lmc") return BaselineKind::lmc;
  if (name == "gp-oh" || name == "gp_oh") return BaselineKind::gp_oh;
  if (name == "gp-wo" || name == "gp_wo") return BaselineKind::gp_wo;
  throw InvalidArgument("unknown baseline '" + std::string(name) + "'");
}

Matrix BaselineModel::condition_covariance() const {
  switch (kind) {
    case BaselineKind::gp_ind: return Matrix::Identity(num_conditions, num_conditions);
    case BaselineKind::gp_wo: return Matrix::Ones(1, 1);
    case BaselineKind::lmc: return coreg_chol * coreg_chol.transpose();
    case BaselineKind::gp_oh: {
      const Vector a = onehot_lengthscales.array().square().inverse();
      Matrix C(num_conditions, num_conditions);
      for (Index d = 0; d < num_conditions; ++d)
        for (Index e = 0; e < num_conditions; ++e) C(d, e) = d == e ? 1.0 : std::exp(-0.5 * (a[d] + a[e]));
      return C;
    }
  }
  return {};
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct Gradient {
  double log_noise = 0.0;
  KernelGradient kx;
  Matrix C;
};

Index cid(const BaselineModel& m, Index d) { return m.kind == BaselineKind::gp_wo ? 0 : d; }

/// R(i, j) = C[cid(a_i), cid(b_j)].
Matrix pair_factor(const BaselineModel& m, const Matrix& C, const std::vector<Index>& a,
                   const std::vector<Index>& b) {
  Matrix R(static_cast<Index>(a.size()), static_cast<Index>(b.size()));
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t i = 0; i < a.size(); ++i) R(static_cast<Index>(i), static_cast<Index>(j)) = C(cid(m, a[i]), cid(m, b[j]));
  return R;
}

/// Training inputs, one row per observation.
Matrix flat_inputs(const BaselineModel& m) {
  if (m.grid_rows == 0) return m.X;
  const Index N = m.grid_rows;
  const Index D = m.y.size() / N;
  Matrix X(N * D, m.X.cols());
  for (Index d = 0; d < D; ++d) X.middleRows(d * N, N) = m.X;
  return X;
}

/// Condition covariance over the grid columns (expanded for gp_wo).
Matrix grid_condition_covariance(const BaselineModel& m) {
  if (m.kind == BaselineKind::gp_wo) return Matrix::Ones(m.num_conditions, m.num_conditions);
  return m.condition_covariance();
}

double dense_exact(const BaselineModel& m, Gradient* g) {
  const Index n = m.y.size();
  const Matrix X = flat_inputs(m);
  const Matrix C = m.condition_covariance();
  const Matrix Kx = kernel_matrix(m.kernel_x, X, X);
  const Matrix R = pair_factor(m, C, m.ids, m.ids);
  Matrix K = R.cwiseProduct(Kx);
  K.diagonal().array() += m.noise_variance;
  const CholeskyFactor F(K, "K_baseline");
  const Vector alpha = F.solve(m.y);
  const double value = -0.5 * m.y.dot(alpha) - 0.5 * F.log_det() - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (g) {
    const Matrix G = 0.5 * (alpha * alpha.transpose() - F.inverse());
    g->log_noise = m.noise_variance * G.trace();
    accumulate_kernel_gradient(m.kernel_x, X, X, Kx, G.cwiseProduct(R), g->kx, nullptr, nullptr);
    const Matrix W = G.cwiseProduct(Kx);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) g->C(cid(m, m.ids[static_cast<std::size_t>(i)]), cid(m, m.ids[static_cast<std::size_t>(j)])) += W(i, j);
  }
  return value;
}

/// Eigendecompositions of the two grid factors.
struct KroneckerSystem {
  Matrix Ux, Uc, W;  // W(a, b) = 1 / (lx_a lc_b + noise)
  Vector lx, lc;
  Matrix Kx, C;

  KroneckerSystem(const BaselineModel& m) {
    Kx = kernel_matrix(m.kernel_x, m.X, m.X);
    C = grid_condition_covariance(m);
    const Eigen::SelfAdjointEigenSolver<Matrix> ex(Kx), ec(C);
    Ux = ex.eigenvectors();
    Uc = ec.eigenvectors();
    lx = ex.eigenvalues().cwiseMax(0.0);
    lc = ec.eigenvalues().cwiseMax(0.0);
    W = ((lx * lc.transpose()).array() + m.noise_variance).inverse().matrix();
    if (!W.allFinite()) throw NumericalError("Kronecker baseline system is singular", "K_baseline");
  }
};

double kron_exact(const BaselineModel& m, Gradient* g) {
  const Index N = m.grid_rows;
  const Index D = m.num_conditions;
  const KroneckerSystem ks(m);
  const Matrix Y = unvec(m.y, N, D);
  const Matrix A = ks.Ux * (ks.Ux.transpose() * Y * ks.Uc).cwiseProduct(ks.W) * ks.Uc.transpose();
  const double logdet = -ks.W.array().log().sum();
  const double value = -0.5 * Y.cwiseProduct(A).sum() - 0.5 * logdet - 0.5 * static_cast<double>(N * D) * kLog2Pi;
  if (g) {
    const Matrix GC = 0.5 * A.transpose() * ks.Kx * A -
                      0.5 * ks.Uc * (ks.W.transpose() * ks.lx).asDiagonal() * ks.Uc.transpose();
    const Matrix GK = 0.5 * A * ks.C * A.transpose() -
                      0.5 * ks.Ux * (ks.W * ks.lc).asDiagonal() * ks.Ux.transpose();
    g->log_noise = m.noise_variance * 0.5 * (A.squaredNorm() - ks.W.sum());
    accumulate_kernel_gradient(m.kernel_x, m.X, m.X, ks.Kx, GK, g->kx, nullptr, nullptr);
    if (m.kind != BaselineKind::gp_wo) g->C += GC;
  }
  return value;
}

/// Inducing pairs (z_m, e) for every effective condition e; index e * M + m.
struct SparseSystem {
  Matrix X, C, Kzz, Kxz, Kfu, P;
  Vector b;
  CholeskyFactor Fu, Fs;
  Vector t;
  double s;

  explicit SparseSystem(const BaselineModel& m) {
    X = flat_inputs(m);
    C = m.condition_covariance();
    const Index E = C.rows();
    const Index M = m.Z.rows();
    Kzz = kernel_matrix(m.kernel_x, m.Z, m.Z);
    Kxz = kernel_matrix(m.kernel_x, X, m.Z);
    Kfu = Matrix(X.rows(), E * M);
    for (Index e = 0; e < E; ++e)
      for (Index i = 0; i < X.rows(); ++i)
        Kfu.block(i, e * M, 1, M) = C(cid(m, m.ids[static_cast<std::size_t>(i)]), e) * Kxz.row(i);
    Fu = CholeskyFactor(kron(C, Kzz), "K_uu");
    s = 1.0 / m.noise_variance;
    P = Kfu.transpose() * Kfu;
    b = Kfu.transpose() * m.y;
    Fs = CholeskyFactor(Fu.matrix() + s * P, "Sigma");
    t = Fs.solve(b);
  }
};

double sparse_bound(const BaselineModel& m, Gradient* g) {
  const SparseSystem sys(m);
  const double n = static_cast<double>(m.y.size());
  const double s = sys.s;
  const double yy = m.y.squaredNorm();
  double kff = 0.0;
  for (Index i = 0; i < m.y.size(); ++i) {
    const Index d = cid(m, m.ids[static_cast<std::size_t>(i)]);
    kff += sys.C(d, d) * m.kernel_x.variance;
  }
  const Matrix Kuinv = sys.Fu.inverse();
  const double trKP = Kuinv.cwiseProduct(sys.P).sum();
  const double bt = sys.b.dot(sys.t);
  const double value = -0.5 * n * kLog2Pi - 0.5 * sys.Fs.log_det() + 0.5 * sys.Fu.log_det() +
                       0.5 * n * std::log(s) - 0.5 * s * yy + 0.5 * s * s * bt - 0.5 * s * kff + 0.5 * s * trKP;
  if (!g) return value;

  const Matrix Sinv = sys.Fs.inverse();
  const Matrix GS = -0.5 * Sinv - 0.5 * s * s * sys.t * sys.t.transpose();
  const Matrix GKuu = GS + 0.5 * Kuinv - 0.5 * s * Kuinv * sys.P * Kuinv;
  const Matrix GP = s * GS + 0.5 * s * Kuinv;
  const Vector Gb = s * s * sys.t;
  const Matrix GKfu = sys.Kfu * (GP + GP.transpose()) + m.y * Gb.transpose();
  const double ds = GS.cwiseProduct(sys.P).sum() + 0.5 * n / s - 0.5 * yy + s * bt - 0.5 * kff + 0.5 * trKP;
  g->log_noise = -s * ds;

  const Index E = sys.C.rows();
  const Index M = m.Z.rows();
  Matrix GKzz = Matrix::Zero(M, M);
  for (Index e = 0; e < E; ++e)
    for (Index f = 0; f < E; ++f) {
      const auto blk = GKuu.block(e * M, f * M, M, M);
      GKzz += sys.C(e, f) * blk;
      g->C(e, f) += blk.cwiseProduct(sys.Kzz).sum();
    }
  Matrix GKxz = Matrix::Zero(sys.X.rows(), M);
  for (Index e = 0; e < E; ++e) {
    const auto Ge = GKfu.middleCols(e * M, M);
    const Vector rowdot = Ge.cwiseProduct(sys.Kxz).rowwise().sum();
    for (Index i = 0; i < sys.X.rows(); ++i) {
      const Index d = cid(m, m.ids[static_cast<std::size_t>(i)]);
      GKxz.row(i) += sys.C(d, e) * Ge.row(i);
      g->C(d, e) += rowdot[i];
    }
  }
  const KernelParams& k = m.kernel_x;
  accumulate_kernel_gradient(k, m.Z, m.Z, sys.Kzz, GKzz, g->kx, nullptr, nullptr);
  accumulate_kernel_gradient(k, sys.X, m.Z, sys.Kxz, GKxz, g->kx, nullptr, nullptr);
  for (Index i = 0; i < m.y.size(); ++i) {
    const Index d = cid(m, m.ids[static_cast<std::size_t>(i)]);
    g->kx.log_variance += -0.5 * s * sys.C(d, d) * k.variance;
    g->C(d, d) += -0.5 * s * k.variance;
  }
  return value;
}

double evaluate(const BaselineModel& m, Gradient* g) {
  if (g) {
    g->kx = KernelGradient(m.kernel_x.dims());
    g->C = Matrix::Zero(m.effective_conditions(), m.effective_conditions());
  }
  if (m.sparse) return sparse_bound(m, g);
  if (m.grid_rows > 0) return kron_exact(m, g);
  return dense_exact(m, g);
}

bool fits_variance(BaselineKind k) { return k != BaselineKind::lmc; }

}  // namespace

double baseline_objective(const BaselineModel& model) { return evaluate(model, nullptr); }

Vector baseline_pack(const BaselineModel& m) {
  std::vector<double> x;
  x.push_back(std::log(m.noise_variance));
  if (fits_variance(m.kind)) x.push_back(std::log(m.kernel_x.variance));
  for (Index q = 0; q < m.kernel_x.dims(); ++q) x.push_back(std::log(m.kernel_x.lengthscales[q]));
  if (m.kind == BaselineKind::lmc) {
    for (Index j = 0; j < m.num_conditions; ++j) {
      x.push_back(std::log(m.coreg_chol(j, j)));
      for (Index i = j + 1; i < m.num_conditions; ++i) x.push_back(m.coreg_chol(i, j));
    }
  }
  if (m.kind == BaselineKind::gp_oh) {
    for (Index d = 0; d < m.num_conditions; ++d) x.push_back(std::log(m.onehot_lengthscales[d]));
  }
  return Eigen::Map<Vector>(x.data(), static_cast<Index>(x.size()));
}

BaselineModel baseline_unpack(const BaselineModel& shape, const Vector& x) {
  auto ex = [](double v) { return std::exp(std::clamp(v, -100.0, 100.0)); };
  BaselineModel m = shape;
  Index k = 0;
  m.noise_variance = ex(x[k++]);
  if (fits_variance(m.kind)) m.kernel_x.variance = ex(x[k++]);
  for (Index q = 0; q < m.kernel_x.dims(); ++q) m.kernel_x.lengthscales[q] = ex(x[k++]);
  if (m.kind == BaselineKind::lmc) {
    for (Index j = 0; j < m.num_conditions; ++j) {
      m.coreg_chol(j, j) = ex(x[k++]);
      for (Index i = j + 1; i < m.num_conditions; ++i) m.coreg_chol(i, j) = x[k++];
    }
  }
  if (m.kind == BaselineKind::gp_oh) {
    for (Index d = 0; d < m.num_conditions; ++d) m.onehot_lengthscales[d] = ex(x[k++]);
  }
  return m;
}

double baseline_objective_grad(const BaselineModel& m, Vector& grad) {
  Gradient g;
  const double value = evaluate(m, &g);
  std::vector<double> out;
  out.push_back(g.log_noise);
  if (fits_variance(m.kind)) out.push_back(g.kx.log_variance);
  for (Index q = 0; q < m.kernel_x.dims(); ++q) out.push_back(g.kx.log_lengthscales[q]);
  if (m.kind == BaselineKind::lmc) {
    const Matrix& L = m.coreg_chol;
    const Matrix GL = (g.C + g.C.transpose()) * L;
    for (Index j = 0; j < m.num_conditions; ++j) {
      out.push_back(GL(j, j) * L(j, j));
      for (Index i = j + 1; i < m.num_conditions; ++i) out.push_back(GL(i, j));
    }
  }
  if (m.kind == BaselineKind::gp_oh) {
    const Matrix C = m.condition_covariance();
    const Vector a = m.onehot_lengthscales.array().square().inverse();
    for (Index d = 0; d < m.num_conditions; ++d) {
      double acc = 0.0;
      for (Index e = 0; e < m.num_conditions; ++e) {
        if (e != d) acc += (g.C(d, e) + g.C(e, d)) * C(d, e) * a[d];
      }
      out.push_back(acc);
    }
  }
  grad = Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
  return value;
}

BaselineModel make_baseline(BaselineKind kind, const ObservationSet& data, const KernelParams& kernel_x,
                            double noise_variance, const BaselineConfig& config) {
  BaselineModel m;
  m.kind = kind;
  m.num_conditions = num_conditions(data);
  m.kernel_x = kernel_x;
  m.noise_variance = noise_variance;
  if (const auto* g = std::get_if<GridObservations>(&data)) {
    g->validate();
    m.X = g->X;
    m.y = vec(g->Y);
    m.grid_rows = g->X.rows();
    for (Index d = 0; d < g->Y.cols(); ++d)
      for (Index n = 0; n < g->X.rows(); ++n) m.ids.push_back(d);
  } else {
    const auto& r = std::get<RaggedObservations>(data);
    r.validate(input_dims(data));
    m.X = Matrix(r.total_points(), input_dims(data));
    m.y = Vector(r.total_points());
    Index row = 0;
    for (Index d = 0; d < r.num_conditions(); ++d) {
      const auto& c = r.conditions[static_cast<std::size_t>(d)];
      m.X.middleRows(row, c.X.rows()) = c.X;
      m.y.segment(row, c.y.size()) = c.y;
      row += c.y.size();
      for (Index i = 0; i < c.y.size(); ++i) m.ids.push_back(d);
    }
  }
  if (kernel_x.dims() != m.X.cols()) throw InvalidArgument("baseline kernel dimension does not match the inputs");
  m.coreg_chol = Matrix::Identity(m.num_conditions, m.num_conditions);
  m.onehot_lengthscales = Vector::Ones(m.num_conditions);
  if (m.y.size() > config.exact_limit) {
    m.sparse = true;
    m.Z = kmeans(flat_inputs(m), std::min<Index>(config.num_inducing, m.y.size()), config.seed);
  }
  return m;
}

BaselineModel fit_baseline(BaselineKind kind, const ObservationSet& data, const BaselineConfig& config) {
  const Index Q = input_dims(data);
  BaselineModel shape = make_baseline(kind, data, KernelParams::rbf(1.0, Vector::Ones(Q)), 1.0, config);
  const Matrix X = flat_inputs(shape);
  const Vector& y = shape.y;
  const double var_y = y.size() > 1 ? (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1) : 1.0;
  const double vy = var_y > 0.0 ? var_y : 1.0;
  for (Index q = 0; q < Q; ++q) {
    const double sd = X.rows() > 1 ? std::sqrt((X.col(q).array() - X.col(q).mean()).square().sum() / static_cast<double>(X.rows() - 1)) : 0.0;
    shape.kernel_x.lengthscales[q] = sd > 0.0 ? sd : 1.0;
  }
  shape.noise_variance = 0.1 * vy;
  if (kind == BaselineKind::lmc) {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 0.1);
    const Index D = shape.num_conditions;
    shape.coreg_chol = std::sqrt(vy) * Matrix::Identity(D, D);
    for (Index j = 0; j < D; ++j)
      for (Index i = j + 1; i < D; ++i) shape.coreg_chol(i, j) = std::sqrt(vy) * normal(rng);
  } else {
    shape.kernel_x.variance = vy;
  }

  const Objective objective = [&](const Vector& x, Vector* grad) {
    const BaselineModel m = baseline_unpack(shape, x);
    if (!grad) return baseline_objective(m);
    return baseline_objective_grad(m, *grad);
  };
  OptimizeOptions opts;
  opts.kind = config.optimizer;
  opts.max_iters = config.max_iters;
  opts.learning_rate = config.learning_rate;
  opts.tolerance = config.tolerance;
  const auto res = maximize(objective, baseline_pack(shape), opts);
  return baseline_unpack(shape, res.x);
}

PredictiveMoments predict_baseline(const BaselineModel& m, const Matrix& Xs,
                                   const std::vector<Index>& ids, bool with_noise) {
  if (Xs.cols() != m.X.cols()) throw InvalidArgument("prediction inputs have the wrong dimension");
  if (static_cast<Index>(ids.size()) != Xs.rows()) throw InvalidArgument("need one condition id per input");
  for (Index d : ids) {
    if (d < 0 || d >= m.num_conditions) throw InvalidArgument("unknown condition id " + std::to_string(d));
  }
  const Index P = Xs.rows();
  const Matrix C = m.condition_covariance();
  Vector prior(P);
  for (Index i = 0; i < P; ++i) {
    const Index d = cid(m, ids[static_cast<std::size_t>(i)]);
    prior[i] = C(d, d) * m.kernel_x.variance;
  }
  PredictiveMoments out{Vector(P), Vector(P)};
  if (P == 0) return out;

  if (m.sparse) {
    const SparseSystem sys(m);
    const Index E = C.rows();
    const Index M = m.Z.rows();
    const Matrix Ksz = kernel_matrix(m.kernel_x, Xs, m.Z);
    Matrix Ksu(P, E * M);
    for (Index e = 0; e < E; ++e)
      for (Index i = 0; i < P; ++i) Ksu.block(i, e * M, 1, M) = C(cid(m, ids[static_cast<std::size_t>(i)]), e) * Ksz.row(i);
    out.mean = sys.s * Ksu * sys.t;
    const Matrix Lu = sys.Fu.solve_lower(Ksu.transpose());
    const Matrix Ls = sys.Fs.solve_lower(Ksu.transpose());
    out.variance = prior - Lu.colwise().squaredNorm().transpose() + Ls.colwise().squaredNorm().transpose();
  } else if (m.grid_rows > 0) {
    const KroneckerSystem ks(m);
    const Index N = m.grid_rows;
    const Matrix Y = unvec(m.y, N, m.num_conditions);
    const Matrix A = ks.Ux * (ks.Ux.transpose() * Y * ks.Uc).cwiseProduct(ks.W) * ks.Uc.transpose();
    const Matrix Kxs = kernel_matrix(m.kernel_x, m.X, Xs);  // N x P
    Matrix Cs(m.num_conditions, P);
    for (Index i = 0; i < P; ++i) Cs.col(i) = ks.C.col(ids[static_cast<std::size_t>(i)]);
    out.mean = (A.transpose() * Kxs).cwiseProduct(Cs).colwise().sum().transpose();
    const Matrix Px = (ks.Ux.transpose() * Kxs).array().square().matrix();
    const Matrix Pc = (ks.Uc.transpose() * Cs).array().square().matrix();
    out.variance = prior - (ks.W * Pc).cwiseProduct(Px).colwise().sum().transpose();
  } else {
    const Matrix X = flat_inputs(m);
    const Matrix R = pair_factor(m, C, ids, m.ids);
    const Matrix Ks = R.cwiseProduct(kernel_matrix(m.kernel_x, Xs, X));
    Matrix K = pair_factor(m, C, m.ids, m.ids).cwiseProduct(kernel_matrix(m.kernel_x, X, X));
    K.diagonal().array() += m.noise_variance;
    const CholeskyFactor F(K, "K_baseline");
    out.mean = Ks * F.solve(m.y);
    out.variance = prior - F.solve_lower(Ks.transpose()).colwise().squaredNorm().transpose();
  }
  // cancellation error in the exact paths scales with the prior variance
  for (Index i = 0; i < P; ++i) {
    if (out.variance[i] < 0.0 && out.variance[i] > -1e-8 * prior[i]) out.variance[i] = 0.0;
  }
  clamp_variances(out.variance, "baseline prediction");
  if (with_noise) out.variance.array() += m.noise_variance;
  return out;
}

Matrix baseline_prior_covariance(const BaselineModel& model, const Matrix& X) {
  Matrix C = model.kind == BaselineKind::gp_wo ? Matrix::Ones(model.num_conditions, model.num_conditions)
                                               : model.condition_covariance();
  return kron(C, kernel_matrix(model.kernel_x, X, X));
}

}  // namespace lvmogp
