#include "lvmogp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lvmogp {

std::string to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kernel_x: return "kernel_x";
    case ParamGroup::kernel_h: return "kernel_h";
    case ParamGroup::noise: return "noise";
    case ParamGroup::latent_means: return "latent_means";
    case ParamGroup::latent_variances: return "latent_variances";
    case ParamGroup::inducing_h: return "inducing_h";
    case ParamGroup::inducing_x: return "inducing_x";
    case ParamGroup::qu_mean: return "qu_mean";
    case ParamGroup::qu_cov_h: return "qu_cov_h";
    case ParamGroup::qu_cov_x: return "qu_cov_x";
  }
  return "unknown";
}

ParamGroup param_group_from_string(const std::string& name) {
  for (auto g : kAllParamGroups) {
    if (to_string(g) == name) return g;
  }
  throw InvalidArgument("unknown parameter group '" + name + "'");
}

std::string to_string(InitStrategy s) { return s == InitStrategy::random ? "random" : "pca"; }

InitStrategy init_strategy_from_string(const std::string& name) {
  if (name == "random") return InitStrategy::random;
  if (name == "pca") return InitStrategy::pca;
  throw InvalidArgument("unknown initialization strategy '" + name + "'");
}

void TrainConfig::validate() const {
  if (max_iters < 0) throw InvalidArgument("max_iters must be non-negative");
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (warmup_iters < 0) throw InvalidArgument("warmup_iters must be non-negative");
}

namespace {

constexpr double kLogClamp = 100.0;

double safe_exp(double v) { return std::exp(std::clamp(v, -kLogClamp, kLogClamp)); }

Index tri_size(Index n) { return n * (n + 1) / 2; }

void pack_lower(const Matrix& L, double* out) {
  Index k = 0;
  for (Index j = 0; j < L.cols(); ++j) {
    out[k++] = std::log(L(j, j));
    for (Index i = j + 1; i < L.rows(); ++i) out[k++] = L(i, j);
  }
}

Matrix unpack_lower(const double* in, Index n) {
  Matrix L = Matrix::Zero(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    L(j, j) = safe_exp(in[k++]);
    for (Index i = j + 1; i < n; ++i) {
      const double v = in[k++];
      L(i, j) = std::isfinite(v) ? v : 0.0;
    }
  }
  return L;
}

void pack_lower_gradient(const Matrix& L, const Matrix& G, double* out) {
  const Matrix GL = (G + G.transpose()) * L;
  Index k = 0;
  for (Index j = 0; j < L.cols(); ++j) {
    out[k++] = GL(j, j) * L(j, j);
    for (Index i = j + 1; i < L.rows(); ++i) out[k++] = GL(i, j);
  }
}

void pack_kernel(const KernelParams& k, double* out) {
  out[0] = std::log(k.variance);
  for (Index q = 0; q < k.dims(); ++q) out[1 + q] = std::log(k.lengthscales[q]);
}

KernelParams unpack_kernel(const KernelParams& shape, const double* in) {
  KernelParams k = shape;
  k.variance = safe_exp(in[0]);
  for (Index q = 0; q < k.dims(); ++q) k.lengthscales[q] = safe_exp(in[1 + q]);
  return k;
}

}  // namespace

ParamLayout::ParamLayout(const LvmogpModel& shape) : shape_(shape) {
  shape_.validate();
  const Index D = shape.num_conditions();
  const Index QH = shape.latent_dims();
  const Index MH = shape.inducing.num_latent();
  const Index MX = shape.inducing.num_input();
  auto add = [&](ParamGroup g, Index n) {
    segments_.push_back({g, size_, n});
    size_ += n;
  };
  add(ParamGroup::kernel_x, 1 + shape.kernel_x.dims());
  add(ParamGroup::kernel_h, 1 + shape.kernel_h.dims());
  add(ParamGroup::noise, shape.noise_variance.size());
  add(ParamGroup::latent_means, D * QH);
  add(ParamGroup::latent_variances, D * QH);
  add(ParamGroup::inducing_h, MH * QH);
  add(ParamGroup::inducing_x, MX * shape.input_dims());
  add(ParamGroup::qu_mean, MX * MH);
  add(ParamGroup::qu_cov_h, tri_size(MH));
  add(ParamGroup::qu_cov_x, tri_size(MX));
}

const ParamLayout::Segment& ParamLayout::segment(ParamGroup group) const {
  for (const auto& s : segments_) {
    if (s.group == group) return s;
  }
  throw InvalidArgument("unknown parameter group");
}

Vector ParamLayout::pack(const LvmogpModel& m) const {
  Vector x(size_);
  double* p = x.data();
  auto at = [&](ParamGroup g) { return p + segment(g).offset; };
  auto copy = [](const Matrix& A, double* out) { std::copy(A.data(), A.data() + A.size(), out); };
  pack_kernel(m.kernel_x, at(ParamGroup::kernel_x));
  pack_kernel(m.kernel_h, at(ParamGroup::kernel_h));
  const Vector log_noise = m.noise_variance.array().log();
  std::copy(log_noise.data(), log_noise.data() + log_noise.size(), at(ParamGroup::noise));
  copy(m.latent.means, at(ParamGroup::latent_means));
  copy(m.latent.variances.array().log().matrix(), at(ParamGroup::latent_variances));
  copy(m.inducing.Z_H, at(ParamGroup::inducing_h));
  copy(m.inducing.Z_X, at(ParamGroup::inducing_x));
  copy(m.q_u.mean, at(ParamGroup::qu_mean));
  pack_lower(m.q_u.covH_chol, at(ParamGroup::qu_cov_h));
  pack_lower(m.q_u.covX_chol, at(ParamGroup::qu_cov_x));
  return x;
}

LvmogpModel ParamLayout::unpack(const Vector& x) const {
  if (x.size() != size_) throw InvalidArgument("parameter vector has the wrong length");
  LvmogpModel m = shape_;
  const double* p = x.data();
  auto at = [&](ParamGroup g) { return p + segment(g).offset; };
  auto read = [](const double* in, Matrix& A) {
    for (Index i = 0; i < A.size(); ++i) A.data()[i] = std::isfinite(in[i]) ? in[i] : 0.0;
  };
  m.kernel_x = unpack_kernel(shape_.kernel_x, at(ParamGroup::kernel_x));
  m.kernel_h = unpack_kernel(shape_.kernel_h, at(ParamGroup::kernel_h));
  for (Index i = 0; i < m.noise_variance.size(); ++i) {
    m.noise_variance[i] = safe_exp(at(ParamGroup::noise)[i]);
  }
  read(at(ParamGroup::latent_means), m.latent.means);
  const double* lv = at(ParamGroup::latent_variances);
  for (Index i = 0; i < m.latent.variances.size(); ++i) m.latent.variances.data()[i] = safe_exp(lv[i]);
  read(at(ParamGroup::inducing_h), m.inducing.Z_H);
  read(at(ParamGroup::inducing_x), m.inducing.Z_X);
  read(at(ParamGroup::qu_mean), m.q_u.mean);
  m.q_u.covH_chol = unpack_lower(at(ParamGroup::qu_cov_h), m.inducing.num_latent());
  m.q_u.covX_chol = unpack_lower(at(ParamGroup::qu_cov_x), m.inducing.num_input());
  return m;
}

Vector ParamLayout::pack_gradient(const LvmogpModel& m, const ModelGradient& g) const {
  Vector out(size_);
  double* p = out.data();
  auto at = [&](ParamGroup grp) { return p + segment(grp).offset; };
  auto copy = [](const Matrix& A, double* o) { std::copy(A.data(), A.data() + A.size(), o); };
  auto kernel = [](const KernelGradient& kg, double* o) {
    o[0] = kg.log_variance;
    for (Index q = 0; q < kg.log_lengthscales.size(); ++q) o[1 + q] = kg.log_lengthscales[q];
  };
  kernel(g.kernel_x, at(ParamGroup::kernel_x));
  kernel(g.kernel_h, at(ParamGroup::kernel_h));
  std::copy(g.log_noise.data(), g.log_noise.data() + g.log_noise.size(), at(ParamGroup::noise));
  copy(g.latent_means, at(ParamGroup::latent_means));
  copy(g.latent_log_variances, at(ParamGroup::latent_variances));
  copy(g.Z_H, at(ParamGroup::inducing_h));
  copy(g.Z_X, at(ParamGroup::inducing_x));
  copy(g.mean, at(ParamGroup::qu_mean));
  pack_lower_gradient(m.q_u.covH_chol, g.covH, at(ParamGroup::qu_cov_h));
  pack_lower_gradient(m.q_u.covX_chol, g.covX, at(ParamGroup::qu_cov_x));
  return out;
}

void ParamLayout::fix_gauge(Vector& x) const {
  const auto& sh = segment(ParamGroup::qu_cov_h);
  const auto& sx = segment(ParamGroup::qu_cov_x);
  const Index MH = shape_.inducing.num_latent();
  const Index MX = shape_.inducing.num_input();
  const Matrix LH = unpack_lower(x.data() + sh.offset, MH);
  const double c = std::sqrt(static_cast<double>(MH) / LH.squaredNorm());
  if (!std::isfinite(c) || c <= 0.0) return;
  const double log_c = std::log(c);
  auto rescale = [&](Index offset, Index n, double factor, double log_factor) {
    Index k = offset;
    for (Index j = 0; j < n; ++j) {
      x[k++] += log_factor;
      for (Index i = j + 1; i < n; ++i) x[k++] *= factor;
    }
  };
  rescale(sh.offset, MH, c, log_c);
  rescale(sx.offset, MX, 1.0 / c, -log_c);
}

GradientResult grad_bound(const LvmogpModel& model, const ObservationSet& data,
                          const BoundOptions& options) {
  const ParamLayout layout(model);
  ModelGradient mg;
  const BoundValue value = evaluate_bound(model, data, options, &mg);
  return {value.total(), layout.pack_gradient(model, mg)};
}

GradientResult grad_bound_whitened(const LvmogpModel& whitened, const ObservationSet& data,
                                   const BoundOptions& options) {
  const ParamLayout layout(whitened);
  ModelGradient g;
  const double value = evaluate_bound_whitened(whitened, data, options, &g).total();
  return {value, layout.pack_gradient(whitened, g)};
}

namespace {

std::vector<Index> active_indices(const ParamLayout& layout, const std::set<ParamGroup>& frozen) {
  std::vector<Index> idx;
  for (const auto& s : layout.segments()) {
    if (frozen.count(s.group)) continue;
    for (Index i = 0; i < s.size; ++i) idx.push_back(s.offset + i);
  }
  return idx;
}

Vector gather(const Vector& full, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = full[idx[i]];
  return out;
}

void scatter(Vector& full, const std::vector<Index>& idx, const Vector& part) {
  for (std::size_t i = 0; i < idx.size(); ++i) full[idx[i]] = part[static_cast<Index>(i)];
}

}  // namespace

FitResult fit(const LvmogpModel& model0, const ObservationSet& data, const TrainConfig& config) {
  config.validate();
  model0.validate();
  const BoundOptions bopts{config.include_kl_qh};
  FitResult out{model0, {evaluate_bound(model0, data, bopts).total()}};
  if (config.max_iters == 0) return out;

  // x holds the whitened q(U) when config.whiten is set
  const ParamLayout layout(model0);
  auto to_x = [&](const LvmogpModel& m) {
    if (!config.whiten) return layout.pack(m);
    LvmogpModel w = m;
    w.q_u = whiten_qu(m);
    return layout.pack(w);
  };
  auto from_x = [&](const Vector& v) {
    return config.whiten ? unwhiten_qu(layout.unpack(v)) : layout.unpack(v);
  };
  Vector x = to_x(model0);

  const bool qu_free = !config.frozen.count(ParamGroup::qu_mean) && !config.frozen.count(ParamGroup::qu_cov_h) &&
                       !config.frozen.count(ParamGroup::qu_cov_x);
  if (config.analytic_qu && qu_free) {
    LvmogpModel m = from_x(x);
    m.q_u = optimal_qu(m, data);
    const double f = evaluate_bound(m, data, bopts).total();
    if (std::isfinite(f) && f > out.trace.back()) {
      x = to_x(m);
      out.trace.push_back(f);
    }
  }

  auto run_phase = [&](const std::set<ParamGroup>& frozen, Index iters) {
    const auto idx = active_indices(layout, frozen);
    if (idx.empty() || iters == 0) return;
    const Objective objective = [&](const Vector& part, Vector* g) {
      Vector full = x;
      scatter(full, idx, part);
      const LvmogpModel m = layout.unpack(full);
      const auto eval = config.whiten ? evaluate_bound_whitened : evaluate_bound;
      if (!g) return eval(m, data, bopts, nullptr).total();
      ModelGradient mg;
      const double f = eval(m, data, bopts, &mg).total();
      *g = gather(layout.pack_gradient(m, mg), idx);
      return f;
    };
    StepHook hook;
    if (!frozen.count(ParamGroup::qu_cov_h) && !frozen.count(ParamGroup::qu_cov_x)) {
      hook = [&](Vector& part) {
        Vector full = x;
        scatter(full, idx, part);
        layout.fix_gauge(full);
        part = gather(full, idx);
      };
    }
    OptimizeOptions opts;
    opts.kind = config.optimizer;
    opts.max_iters = iters;
    opts.learning_rate = config.learning_rate;
    opts.tolerance = config.tolerance;
    opts.tolerance_window = config.tolerance_window;
    const OptimizeResult res = maximize(objective, gather(x, idx), opts, hook);
    scatter(x, idx, res.x);
    out.trace.insert(out.trace.end(), res.trace.begin() + 1, res.trace.end());
  };

  std::set<ParamGroup> warm = config.frozen;
  warm.insert({ParamGroup::kernel_x, ParamGroup::kernel_h, ParamGroup::inducing_h,
               ParamGroup::inducing_x});
  const Index warm_iters = std::min(config.warmup_iters, config.max_iters);
  run_phase(warm, warm_iters);
  run_phase(config.frozen, config.max_iters - warm_iters);

  LvmogpModel fitted = from_x(x);
  if (!config.frozen.count(ParamGroup::qu_cov_h) && !config.frozen.count(ParamGroup::qu_cov_x)) {
    fitted.q_u.fix_gauge();
  }
  const double final_bound = evaluate_bound(fitted, data, bopts).total();
  if (final_bound >= out.trace.front()) out.model = std::move(fitted);
  return out;
}

KroneckerGaussian optimal_qu(const LvmogpModel& model, const ObservationSet& data) {
  const Index MH = model.inducing.num_latent(), MX = model.inducing.num_input();
  const Matrix LH = CholeskyFactor(kernel_matrix(model.kernel_h, model.inducing.Z_H, model.inducing.Z_H), "K^H_uu", true).lower();
  const Matrix LX = CholeskyFactor(kernel_matrix(model.kernel_x, model.inducing.Z_X, model.inducing.Z_X), "K^X_uu", true).lower();
  auto whiten = [](const Matrix& L, const Matrix& A) {
    const Matrix T = L.triangularView<Eigen::Lower>().solve(A);
    return Matrix(L.triangularView<Eigen::Lower>().solve(T.transpose()));
  };
  const Matrix P1 = psi1(model.latent, model.kernel_h, model.inducing.Z_H);
  const auto P2 = psi2_per_condition(model.latent, model.kernel_h, model.inducing.Z_H);
  const RaggedObservations r = std::holds_alternative<GridObservations>(data)
                                   ? RaggedObservations::from_grid(std::get<GridObservations>(data))
                                   : std::get<RaggedObservations>(data);

  // whitened blocks per observed condition; the mean solves against the full
  // precision I + sum_d w_d AH_d kron AX_d
  const Index Mt = MH * MX;
  Matrix A = Matrix::Zero(Mt, Mt);
  Matrix B = Matrix::Zero(MX, MH);
  std::vector<Matrix> AH, AX;
  std::vector<double> wd;
  for (Index d = 0; d < r.num_conditions(); ++d) {
    const auto& c = r.conditions[static_cast<std::size_t>(d)];
    if (c.y.size() == 0) continue;
    const double w = 1.0 / model.noise(d);
    const Matrix Kfu = kernel_matrix(model.kernel_x, c.X, model.inducing.Z_X);
    AH.push_back(whiten(LH, P2[static_cast<std::size_t>(d)]));
    AX.push_back(whiten(LX, Kfu.transpose() * Kfu));
    wd.push_back(w);
    A += w * kron(AH.back(), AX.back());
    B += w * (Kfu.transpose() * c.y) * P1.row(d);
  }
  const Matrix Bw = LH.triangularView<Eigen::Lower>().solve(
                        LX.triangularView<Eigen::Lower>().solve(B).transpose()).transpose();
  A.diagonal().array() += 1.0;
  const Eigen::LLT<Matrix> prec(A);
  if (prec.info() != Eigen::Success) throw NumericalError("optimal_qu: whitened precision is not positive definite");
  const Vector mw = prec.solve(vec(Bw));

  // Kronecker covariance by exact coordinate ascent: with SX fixed the best SH is
  // M_X (sum_d w_d tr(AX_d SX) AH_d + tr(SX) I)^-1, and symmetrically for SX.
  auto spd_inverse = [](const Matrix& P) {
    const Matrix sym = 0.5 * (P + P.transpose());
    const Eigen::LLT<Matrix> llt(sym);
    if (llt.info() != Eigen::Success) throw NumericalError("optimal_qu: covariance update is not positive definite");
    return Matrix(llt.solve(Matrix::Identity(sym.rows(), sym.cols())));
  };
  Matrix SH = Matrix::Identity(MH, MH), SX = Matrix::Identity(MX, MX);
  for (int it = 0; it < 200; ++it) {
    Matrix PH = SX.trace() * Matrix::Identity(MH, MH);
    for (std::size_t k = 0; k < AH.size(); ++k) PH += wd[k] * AX[k].cwiseProduct(SX).sum() * AH[k];
    const Matrix SH_new = static_cast<double>(MX) * spd_inverse(PH);
    Matrix PX = SH_new.trace() * Matrix::Identity(MX, MX);
    for (std::size_t k = 0; k < AH.size(); ++k) PX += wd[k] * AH[k].cwiseProduct(SH_new).sum() * AX[k];
    const Matrix SX_new = static_cast<double>(MH) * spd_inverse(PX);
    const double change = (kron(SH_new, SX_new) - kron(SH, SX)).norm();
    SH = SH_new;
    SX = SX_new;
    if (change <= 1e-12 * kron(SH, SX).norm()) break;
  }

  KroneckerGaussian q;
  q.mean = LX * unvec(mw, MX, MH) * LH.transpose();
  q.covH_chol = (LH * Matrix(Eigen::LLT<Matrix>(SH).matrixL())).triangularView<Eigen::Lower>();
  q.covX_chol = (LX * Matrix(Eigen::LLT<Matrix>(SX).matrixL())).triangularView<Eigen::Lower>();
  q.fix_gauge();
  return q;
}

Matrix kmeans(const Matrix& points, Index k, std::uint64_t seed, Index iterations) {
  const Index n = points.rows();
  const Index Q = points.cols();
  if (n < 1 || k < 1) throw InvalidArgument("kmeans needs at least one point and one cluster");
  std::mt19937_64 rng(seed);

  // distinct rows, in first-seen order
  std::vector<Index> distinct;
  for (Index i = 0; i < n; ++i) {
    bool seen = false;
    for (Index j : distinct) {
      if ((points.row(i) - points.row(j)).cwiseAbs().maxCoeff() == 0.0) {
        seen = true;
        break;
      }
    }
    if (!seen) distinct.push_back(i);
  }

  if (static_cast<Index>(distinct.size()) <= k) {
    Matrix centers(k, Q);
    Vector scale = Vector::Ones(Q);
    if (n > 1) {
      const Eigen::RowVectorXd mean = points.colwise().mean();
      for (Index q = 0; q < Q; ++q) {
        const double sd = std::sqrt((points.col(q).array() - mean[q]).square().sum() / (n - 1));
        if (sd > 0.0) scale[q] = sd;
      }
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, distinct.size() - 1);
    for (Index c = 0; c < k; ++c) {
      if (c < static_cast<Index>(distinct.size())) {
        centers.row(c) = points.row(distinct[static_cast<std::size_t>(c)]);
      } else {
        centers.row(c) = points.row(distinct[pick(rng)]);
        for (Index q = 0; q < Q; ++q) centers(c, q) += 1e-3 * scale[q] * normal(rng);
      }
    }
    return centers;
  }

  // k-means++ seeding
  Matrix centers(k, Q);
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Vector d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    std::uniform_real_distribution<double> u(0.0, d2.sum());
    double target = u(rng);
    Index chosen = n - 1;
    for (Index i = 0; i < n; ++i) {
      target -= d2[i];
      if (target <= 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    centers.row(c) = points.row(chosen);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  for (Index it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    Matrix sums = Matrix::Zero(k, Q);
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        Index far = 0;
        Vector dist(n);
        for (Index i = 0; i < n; ++i) {
          dist[i] = (points.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
        }
        dist.maxCoeff(&far);
        centers.row(c) = points.row(far);
        assign[static_cast<std::size_t>(far)] = c;
      }
    }
  }
  return centers;
}

namespace {

Matrix pooled_inputs(const ObservationSet& data) {
  if (const auto* g = std::get_if<GridObservations>(&data)) return g->X;
  const auto& r = std::get<RaggedObservations>(data);
  const Index Q = input_dims(data);
  Matrix X(r.total_points(), Q);
  Index row = 0;
  for (const auto& c : r.conditions) {
    if (c.y.size() == 0) continue;
    X.middleRows(row, c.X.rows()) = c.X;
    row += c.X.rows();
  }
  return X;
}

Vector pooled_outputs(const ObservationSet& data) {
  if (const auto* g = std::get_if<GridObservations>(&data)) return vec(g->Y);
  const auto& r = std::get<RaggedObservations>(data);
  Vector y(r.total_points());
  Index row = 0;
  for (const auto& c : r.conditions) {
    y.segment(row, c.y.size()) = c.y;
    row += c.y.size();
  }
  return y;
}

double sample_variance(const Vector& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

LvmogpModel init_model(const ObservationSet& data, Index latent_dims, Index num_latent_inducing,
                       Index num_input_inducing, std::uint64_t seed, const InitOptions& options) {
  if (latent_dims < 1 || num_latent_inducing < 1 || num_input_inducing < 1) {
    throw InvalidArgument("init_model: Q_H, M_H and M_X must be at least 1");
  }
  if (const auto* g = std::get_if<GridObservations>(&data)) {
    g->validate();
  } else {
    std::get<RaggedObservations>(data).validate(input_dims(data));
  }
  const Index D = num_conditions(data);
  const Matrix X = pooled_inputs(data);
  const Vector y = pooled_outputs(data);
  const Index Q = X.cols();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  LvmogpModel m;
  Vector ls(Q);
  for (Index q = 0; q < Q; ++q) {
    const double sd = std::sqrt(sample_variance(X.col(q)));
    ls[q] = sd > 0.0 ? sd : 1.0;
  }
  m.kernel_x = KernelParams::rbf(1.0, ls);
  m.kernel_h = KernelParams::rbf(1.0, Vector::Ones(latent_dims));
  const double var_y = sample_variance(y);
  const double noise = var_y > 0.0 ? 0.1 * var_y : 0.1;
  m.noise_variance = Vector::Constant(options.per_condition_noise ? D : 1, noise);

  m.latent.means = Matrix(D, latent_dims);
  for (Index i = 0; i < m.latent.means.size(); ++i) m.latent.means.data()[i] = 0.1 * normal(rng);
  m.latent.variances = Matrix::Constant(D, latent_dims, 0.5);

  if (options.strategy == InitStrategy::pca) {
    if (const auto* g = std::get_if<GridObservations>(&data)) {
      const Matrix Yc = g->Y.rowwise() - g->Y.colwise().mean();
      const Eigen::JacobiSVD<Matrix> svd(Yc, Eigen::ComputeThinV);
      const Matrix& V = svd.matrixV();  // D x min(N, D)
      for (Index q = 0; q < std::min<Index>(latent_dims, V.cols()); ++q) {
        Vector coord = V.col(q) * svd.singularValues()[q];
        const double sd = std::sqrt(sample_variance(coord));
        if (sd > 0.0) m.latent.means.col(q) = (coord.array() - coord.mean()).matrix() / sd;
      }
    }
  }

  m.inducing.Z_H = Matrix(num_latent_inducing, latent_dims);
  for (Index i = 0; i < m.inducing.Z_H.size(); ++i) m.inducing.Z_H.data()[i] = normal(rng);
  m.inducing.Z_X = kmeans(X, num_input_inducing, rng());

  m.q_u.mean = Matrix::Zero(num_input_inducing, num_latent_inducing);
  m.q_u.covH_chol = std::sqrt(0.1) * Matrix::Identity(num_latent_inducing, num_latent_inducing);
  m.q_u.covX_chol = std::sqrt(0.1) * Matrix::Identity(num_input_inducing, num_input_inducing);
  m.validate();
  return m;
}

}  // namespace lvmogp
