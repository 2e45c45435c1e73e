#include "lvmogp/bound.hpp"

#include <cmath>
#include <numbers>
#include <optional>

namespace lvmogp {

ModelGradient ModelGradient::zeros_like(const LvmogpModel& model) {
  ModelGradient g;
  g.kernel_x = KernelGradient(model.kernel_x.dims());
  g.kernel_h = KernelGradient(model.kernel_h.dims());
  g.log_noise = Vector::Zero(model.noise_variance.size());
  g.latent_means = Matrix::Zero(model.latent.means.rows(), model.latent.means.cols());
  g.latent_log_variances = Matrix::Zero(model.latent.means.rows(), model.latent.means.cols());
  g.Z_H = Matrix::Zero(model.inducing.Z_H.rows(), model.inducing.Z_H.cols());
  g.Z_X = Matrix::Zero(model.inducing.Z_X.rows(), model.inducing.Z_X.cols());
  g.mean = Matrix::Zero(model.q_u.mean.rows(), model.q_u.mean.cols());
  g.covH = Matrix::Zero(model.q_u.covH_chol.rows(), model.q_u.covH_chol.rows());
  g.covX = Matrix::Zero(model.q_u.covX_chol.rows(), model.q_u.covX_chol.rows());
  return g;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double frob(const Matrix& A, const Matrix& B) { return A.cwiseProduct(B).sum(); }

double log_det_lower(const Matrix& L) { return 2.0 * L.diagonal().array().log().sum(); }

// L^{-1} B and L^{-T} B for lower triangular L
Matrix lsolve(const Matrix& L, const Matrix& B) { return L.triangularView<Eigen::Lower>().solve(B); }
Matrix ltsolve(const Matrix& L, const Matrix& B) {
  return L.transpose().triangularView<Eigen::Upper>().solve(B);
}
// L^{-1} A L^{-T}
Matrix whiten_sym(const Matrix& L, const Matrix& A) {
  const Matrix T = lsolve(L, A);
  const Matrix W = lsolve(L, T.transpose());
  return 0.5 * (W + W.transpose());
}
// L^{-T} G L^{-1}
Matrix unwhiten_grad(const Matrix& L, const Matrix& G) {
  const Matrix T = ltsolve(L, G);
  const Matrix S = ltsolve(L, T.transpose());
  return 0.5 * (S + S.transpose());
}

Matrix inverse_from_lower(const Matrix& L) {
  const Matrix Linv = lsolve(L, Matrix::Identity(L.rows(), L.cols()));
  return Linv.transpose() * Linv;
}

void check_model_data(const LvmogpModel& model, Index D, Index Q) {
  model.validate();
  if (D != model.num_conditions()) {
    throw InvalidArgument("data has " + std::to_string(D) + " conditions but the model has " +
                          std::to_string(model.num_conditions()));
  }
  if (Q != model.input_dims()) throw InvalidArgument("data input dimension does not match the model");
}

/// Inducing factors and q(U) in whitened coordinates.
struct Shared {
  CholeskyFactor Kh;
  CholeskyFactor Kx;
  Matrix LH, LX;
  Matrix W;       // whitened mean, M_X x M_H
  Matrix CH, CX;  // whitened covariance factors
  Matrix SH, SX;  // CH CH^T, CX CX^T

  Shared(const LvmogpModel& model, bool whitened)
      : Kh(kernel_matrix(model.kernel_h, model.inducing.Z_H, model.inducing.Z_H), "K_uu^H", true),
        Kx(kernel_matrix(model.kernel_x, model.inducing.Z_X, model.inducing.Z_X), "K_uu^X", true),
        LH(Kh.lower()),
        LX(Kx.lower()) {
    if (whitened) {
      W = model.q_u.mean;
      CH = model.q_u.covH_chol;
      CX = model.q_u.covX_chol;
    } else {
      W = lsolve(LH, lsolve(LX, model.q_u.mean).transpose()).transpose();
      CH = lsolve(LH, model.q_u.covH_chol).triangularView<Eigen::Lower>();
      CX = lsolve(LX, model.q_u.covX_chol).triangularView<Eigen::Lower>();
    }
    SH = CH * CH.transpose();
    SX = CX * CX.transpose();
  }
};

/// Gradient w.r.t. the whitened q(U) and the intermediate matrices, before
/// the kernel/psi chain rule. LH, LX collect dF/dL for the Cholesky factors.
struct Partials {
  Matrix W, SH, SX, LH, LX, psi1;
  std::vector<Matrix> psi2;  // one entry (grid) or one per condition (missing)
};

/// Observations for one data term: `rows` are the conditions whose outputs
/// are the columns of Y, all observed at inputs X.
struct Block {
  const Matrix* X;
  Eigen::Map<const Matrix> Y;  // views the caller's data, never copied
  std::vector<Index> rows;
  Index noise_index;
};

// In whitened coordinates KL(q(U) || p(U)) does not involve the kernels.
double kl_qu_impl(const Shared& s, Partials* p) {
  const double MH = static_cast<double>(s.SH.rows());
  const double MX = static_cast<double>(s.SX.rows());
  const double th = s.SH.trace();
  const double tx = s.SX.trace();
  const double kl = 0.5 * (s.W.squaredNorm() + th * tx - MX * log_det_lower(s.CH) -
                           MH * log_det_lower(s.CX) - MH * MX);
  if (p) {
    p->W -= s.W;
    p->SH -= 0.5 * (tx * Matrix::Identity(s.SH.rows(), s.SH.rows()) - MX * inverse_from_lower(s.CH));
    p->SX -= 0.5 * (th * Matrix::Identity(s.SX.rows(), s.SX.rows()) - MH * inverse_from_lower(s.CX));
  }
  return kl;
}

double kl_qh_value(const LatentPosterior& q) {
  const auto& mu = q.means.array();
  const auto& v = q.variances.array();
  return 0.5 * (mu.square() + v - v.log() - 1.0).sum();
}

/// Data term of one block; accumulates partials when `p` is non-null.
/// With B = L_X^{-1} K_uf, AX = B B^T, AH = L_H^{-1} Phi_H L_H^{-T} and
/// Qw = B Y Psi_H L_H^{-T}, the error term is
/// yy + tr(W^T AX W AH) + tr(AH SH) tr(AX SX) - 2 tr(W^T Qw) + psi0 tr(K_ff) - tr(AH) tr(AX).
double block_term(const LvmogpModel& model, const Shared& s, const Block& b, const Matrix& psi1_all,
                  const Matrix& phi_h, double psi0_h, Matrix* phi_grad, ModelGradient* grad,
                  Partials* p) {
  const Index Nb = b.X->rows();
  const Index Rb = static_cast<Index>(b.rows.size());
  const Index MH = s.LH.rows(), MX = s.LX.rows();
  const double n = static_cast<double>(Nb * Rb);
  const double sigma2 = model.noise_variance[b.noise_index];
  const double prec = 1.0 / sigma2;

  Matrix psi_h(Rb, psi1_all.cols());
  for (Index r = 0; r < Rb; ++r) psi_h.row(r) = psi1_all.row(b.rows[static_cast<std::size_t>(r)]);

  const Matrix Kfu = kernel_matrix(model.kernel_x, *b.X, model.inducing.Z_X);
  const Matrix B = lsolve(s.LX, Kfu.transpose());  // M_X x Nb
  const Matrix AX = B * B.transpose();
  const Matrix AH = whiten_sym(s.LH, phi_h);
  const double tr_kff = Nb * model.kernel_x.variance;

  const Matrix YPsi = b.Y * psi_h;                            // Nb x M_H
  const Matrix Rt = lsolve(s.LH, YPsi.transpose());           // M_H x Nb, (YPsi L_H^{-T})^T
  const Matrix Qw = B * Rt.transpose();                       // M_X x M_H
  const Matrix AXW = AX * s.W;
  const Matrix WAH = s.W * AH;
  const double T1 = frob(AXW, WAH);
  const double ah = frob(AH, s.SH);
  const double ax = frob(AX, s.SX);
  const double T2 = ah * ax;
  const double T3 = frob(s.W, Qw);
  const double T4 = psi0_h * tr_kff;
  const double tah = AH.trace();
  const double tax = AX.trace();
  const double T5 = tah * tax;
  const double yy = b.Y.squaredNorm();

  const double inner = yy + T1 + T2 - 2.0 * T3 + T4 - T5;
  const double value = -0.5 * n * (kLog2Pi + std::log(sigma2)) - 0.5 * prec * inner;

  if (grad) {
    const double c = -0.5 * prec;
    p->W += c * 2.0 * AXW * AH + prec * Qw;
    p->SH += c * ax * AH;
    p->SX += c * ah * AX;

    const Matrix G_AH = c * (s.W.transpose() * AXW + ax * s.SH - tax * Matrix::Identity(MH, MH));
    const Matrix G_AX = c * (WAH * s.W.transpose() + ah * s.SX - tah * Matrix::Identity(MX, MX));
    const Matrix G_Q = prec * s.W;

    // AH = L_H^{-1} Phi_H L_H^{-T}
    *phi_grad += unwhiten_grad(s.LH, G_AH);
    p->LH -= 2.0 * ltsolve(s.LH, G_AH * AH);

    // B enters through AX and Qw; Qw also through L_H^{-1} YPsi^T
    const Matrix Bbar = 2.0 * G_AX * B + G_Q * Rt;
    const Matrix LtBbar = ltsolve(s.LX, Bbar);  // M_X x Nb
    p->LX -= LtBbar * B.transpose();
    const Matrix g_kfu = LtBbar.transpose();
    accumulate_kernel_gradient(model.kernel_x, *b.X, model.inducing.Z_X, Kfu, g_kfu, grad->kernel_x,
                               nullptr, &grad->Z_X);

    const Matrix Rtbar = G_Q.transpose() * B;  // M_H x Nb
    p->LH -= ltsolve(s.LH, Rtbar * Rt.transpose());
    const Matrix YPsi_bar = ltsolve(s.LH, Rtbar).transpose();  // Nb x M_H
    const Matrix g_psi = b.Y.transpose() * YPsi_bar;
    for (Index r = 0; r < Rb; ++r) p->psi1.row(b.rows[static_cast<std::size_t>(r)]) += g_psi.row(r);

    grad->kernel_x.log_variance += c * T4;
    grad->kernel_h.log_variance += c * T4;
    grad->log_noise[b.noise_index] += -0.5 * n + 0.5 * prec * inner;
  }
  return value;
}

// dF/dK (symmetric) from dF/dL for L L^T = K; only the lower triangle of Lbar is used.
Matrix cholesky_backward(const Matrix& L, const Matrix& Lbar) {
  Matrix P = (L.transpose() * Lbar.triangularView<Eigen::Lower>().toDenseMatrix()).eval();
  P = P.triangularView<Eigen::Lower>().toDenseMatrix();
  P.diagonal() *= 0.5;
  const Matrix T = ltsolve(L, P);
  const Matrix S = ltsolve(L, T.transpose()).transpose();
  return 0.5 * (S + S.transpose());
}

}  // namespace

KroneckerGaussian whiten_qu(const LvmogpModel& m) {
  const Shared s(m, false);
  return {s.W, s.CH, s.CX};
}

LvmogpModel unwhiten_qu(const LvmogpModel& whitened) {
  const Shared s(whitened, true);
  LvmogpModel m = whitened;
  m.q_u.mean = s.LX * s.W * s.LH.transpose();
  m.q_u.covH_chol = (s.LH * s.CH).triangularView<Eigen::Lower>();
  m.q_u.covX_chol = (s.LX * s.CX).triangularView<Eigen::Lower>();
  return m;
}

namespace {

/// Shared driver for the grid (one block) and missing (one block per condition)
/// paths. `whitened` says how model.q_u is parameterized; the q(U) gradients
/// are returned in the same parameterization.
BoundValue evaluate_blocks(const LvmogpModel& model, const std::vector<Block>& blocks, bool grid,
                           bool whitened, const BoundOptions& options, ModelGradient* grad,
                           Vector* per_block = nullptr) {
  const Shared s(model, whitened);
  const Index D = model.num_conditions();
  const Index MH = model.inducing.num_latent();
  const Index MX = model.inducing.num_input();

  std::optional<Partials> p;
  if (grad) {
    *grad = ModelGradient::zeros_like(model);
    p.emplace();
    p->W = Matrix::Zero(MX, MH);
    p->SH = Matrix::Zero(MH, MH);
    p->SX = Matrix::Zero(MX, MX);
    p->LH = Matrix::Zero(MH, MH);
    p->LX = Matrix::Zero(MX, MX);
    p->psi1 = Matrix::Zero(D, MH);
    p->psi2.assign(grid ? 1 : static_cast<std::size_t>(D), Matrix::Zero(MH, MH));
  }

  const Matrix P1 = psi1(model.latent, model.kernel_h, model.inducing.Z_H);
  Matrix dummy_phi;

  BoundValue out;
  if (per_block) *per_block = Vector::Zero(static_cast<Index>(blocks.size()));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    if (b.X->rows() == 0) continue;
    Matrix phi_h;
    double psi0_h;
    Index phi_slot = 0;
    if (grid) {
      phi_h = psi2(model.latent, model.kernel_h, model.inducing.Z_H);
      psi0_h = psi0(model.latent, model.kernel_h);
    } else {
      const Index d = b.rows.front();
      phi_h = psi2_condition(model.latent, model.kernel_h, model.inducing.Z_H, d);
      psi0_h = psi0(model.latent.row(d), model.kernel_h);
      phi_slot = d;
    }
    const double term =
        block_term(model, s, b, P1, phi_h, psi0_h,
                   grad ? &p->psi2[static_cast<std::size_t>(phi_slot)] : &dummy_phi, grad,
                   grad ? &*p : nullptr);
    if (per_block) (*per_block)[static_cast<Index>(i)] = term;
    out.data_fit += term;
  }

  out.kl_qu = kl_qu_impl(s, grad ? &*p : nullptr);
  if (options.include_kl_qh) out.kl_qh = kl_qh_value(model.latent);

  if (!std::isfinite(out.total())) throw NumericalError("bound evaluated to a non-finite value");

  if (grad) {
    const Matrix GSH = 0.5 * (p->SH + p->SH.transpose());
    const Matrix GSX = 0.5 * (p->SX + p->SX.transpose());
    if (whitened) {
      grad->mean = p->W;
      grad->covH = GSH;
      grad->covX = GSX;
    } else {
      // W = L_X^{-1} M L_H^{-T}, SH = L_H^{-1} covH L_H^{-T}, SX likewise
      grad->mean = ltsolve(s.LH, ltsolve(s.LX, p->W).transpose()).transpose();
      grad->covH = unwhiten_grad(s.LH, GSH);
      grad->covX = unwhiten_grad(s.LX, GSX);
      p->LX -= ltsolve(s.LX, p->W * s.W.transpose()) + 2.0 * ltsolve(s.LX, GSX * s.SX);
      p->LH -= ltsolve(s.LH, p->W.transpose() * s.W) + 2.0 * ltsolve(s.LH, GSH * s.SH);
    }
    accumulate_kernel_gradient(model.kernel_h, model.inducing.Z_H, model.inducing.Z_H,
                               s.Kh.matrix(), cholesky_backward(s.LH, p->LH), grad->kernel_h,
                               &grad->Z_H, &grad->Z_H);
    accumulate_kernel_gradient(model.kernel_x, model.inducing.Z_X, model.inducing.Z_X,
                               s.Kx.matrix(), cholesky_backward(s.LX, p->LX), grad->kernel_x,
                               &grad->Z_X, &grad->Z_X);

    PsiGradient pg(D, MH, model.latent_dims());
    accumulate_psi1_gradient(model.latent, model.kernel_h, model.inducing.Z_H, P1, p->psi1, pg);
    accumulate_psi2_gradient(model.latent, model.kernel_h, model.inducing.Z_H, p->psi2, pg);
    grad->kernel_h += pg.kernel;
    grad->Z_H += pg.Z;
    grad->latent_means += pg.means;
    grad->latent_log_variances += pg.log_variances;
    if (options.include_kl_qh) {
      grad->latent_means -= model.latent.means;
      grad->latent_log_variances -= 0.5 * (model.latent.variances.array() - 1.0).matrix();
    }
  }
  return out;
}

std::vector<Block> grid_blocks(const GridObservations& data) {
  Block b{&data.X, Eigen::Map<const Matrix>(data.Y.data(), data.Y.rows(), data.Y.cols()), {}, 0};
  for (Index d = 0; d < data.Y.cols(); ++d) b.rows.push_back(d);
  return {std::move(b)};
}

std::vector<Block> ragged_blocks(const LvmogpModel& model, const RaggedObservations& data) {
  std::vector<Block> blocks;
  for (Index d = 0; d < data.num_conditions(); ++d) {
    const auto& c = data.conditions[static_cast<std::size_t>(d)];
    blocks.push_back({&c.X, Eigen::Map<const Matrix>(c.y.data(), c.y.size(), 1), {d},
                      model.per_condition_noise() ? d : 0});
  }
  return blocks;
}

BoundValue evaluate_any(const LvmogpModel& model, const ObservationSet& data, bool whitened,
                        const BoundOptions& options, ModelGradient* grad) {
  if (const auto* g = std::get_if<GridObservations>(&data)) {
    g->validate();
    check_model_data(model, g->num_conditions(), g->X.cols());
    if (model.per_condition_noise()) throw InvalidArgument("grid bound requires a shared noise variance");
    return evaluate_blocks(model, grid_blocks(*g), true, whitened, options, grad);
  }
  const auto& r = std::get<RaggedObservations>(data);
  r.validate(model.input_dims());
  check_model_data(model, r.num_conditions(), model.input_dims());
  return evaluate_blocks(model, ragged_blocks(model, r), false, whitened, options, grad);
}

}  // namespace

double kl_qu(const LvmogpModel& model) {
  model.validate();
  const Shared s(model, false);
  return kl_qu_impl(s, nullptr);
}

double kl_qh(const LvmogpModel& model) {
  model.latent.validate();
  return kl_qh_value(model.latent);
}

double bound_reference(const LvmogpModel& model, const GridObservations& data,
                       const BoundOptions& options) {
  data.validate();
  check_model_data(model, data.num_conditions(), data.X.cols());
  if (model.per_condition_noise()) throw InvalidArgument("grid bound requires a shared noise variance");
  const Index N = data.X.rows();
  const Index D = data.Y.cols();
  const Index MH = model.inducing.num_latent();
  const Index MX = model.inducing.num_input();
  if (N * D > kReferenceSizeLimit || MH * MX > kReferenceSizeLimit) {
    throw InvalidArgument("bound_reference is limited to N*D and M_H*M_X <= " +
                          std::to_string(kReferenceSizeLimit) + "; use bound_efficient");
  }

  const CholeskyFactor Kh(kernel_matrix(model.kernel_h, model.inducing.Z_H, model.inducing.Z_H), "K_uu^H", true);
  const CholeskyFactor Kx(kernel_matrix(model.kernel_x, model.inducing.Z_X, model.inducing.Z_X), "K_uu^X", true);
  const Matrix Kuu = kron(Kh.matrix(), Kx.matrix());
  const Eigen::LLT<Matrix> Luu(Kuu);
  if (Luu.info() != Eigen::Success) throw NumericalError("dense K_uu is not positive definite", "K_uu");

  const Matrix Kfu_x = kernel_matrix(model.kernel_x, data.X, model.inducing.Z_X);
  const Matrix Psi = kron(psi1(model.latent, model.kernel_h, model.inducing.Z_H), Kfu_x);
  const Matrix Phi = kron(psi2(model.latent, model.kernel_h, model.inducing.Z_H),
                          Kfu_x.transpose() * Kfu_x);
  const double psi = psi0(model.latent, model.kernel_h) * kernel_diag(model.kernel_x, data.X).sum();
  const Matrix SigmaU = kron(model.q_u.covH(), model.q_u.covX());
  const Vector m = vec(model.q_u.mean);
  const Vector y = vec(data.Y);
  const double sigma2 = model.noise_variance[0];

  const Matrix KinvPhi = Luu.solve(Phi);
  const Matrix KinvPhiKinv = Luu.solve(KinvPhi.transpose()).transpose();
  Matrix second = m * m.transpose() + SigmaU;
  const double trace_term = KinvPhiKinv.cwiseProduct(second.transpose()).sum();
  const Vector Kinv_m = Luu.solve(m);
  const double nd = static_cast<double>(N * D);

  const double F = -0.5 * nd * (kLog2Pi + std::log(sigma2)) - 0.5 / sigma2 * y.squaredNorm() -
                   0.5 / sigma2 * trace_term + (y.transpose() * Psi * Kinv_m).value() / sigma2 -
                   0.5 / sigma2 * (psi - KinvPhi.trace());

  const Eigen::LLT<Matrix> LS(SigmaU);
  if (LS.info() != Eigen::Success) throw NumericalError("dense Sigma^U is not positive definite", "Sigma^U");
  const double logdet_K = 2.0 * Luu.matrixLLT().diagonal().array().log().sum();
  const double logdet_S = 2.0 * LS.matrixLLT().diagonal().array().log().sum();
  const double kl_u = 0.5 * (logdet_K - logdet_S + Luu.solve(SigmaU).trace() + m.dot(Kinv_m) -
                             static_cast<double>(MH * MX));
  const double kl_h = options.include_kl_qh ? kl_qh_value(model.latent) : 0.0;
  return F - kl_u - kl_h;
}

double bound_efficient(const LvmogpModel& model, const GridObservations& data,
                       const BoundOptions& options) {
  data.validate();
  check_model_data(model, data.num_conditions(), data.X.cols());
  if (model.per_condition_noise()) throw InvalidArgument("grid bound requires a shared noise variance");
  return evaluate_blocks(model, grid_blocks(data), true, false, options, nullptr).total();
}

double bound_missing(const LvmogpModel& model, const RaggedObservations& data,
                     const BoundOptions& options) {
  data.validate(model.input_dims());
  check_model_data(model, data.num_conditions(), model.input_dims());
  return evaluate_blocks(model, ragged_blocks(model, data), false, false, options, nullptr).total();
}

Vector missing_data_terms(const LvmogpModel& model, const RaggedObservations& data) {
  data.validate(model.input_dims());
  check_model_data(model, data.num_conditions(), model.input_dims());
  Vector terms;
  evaluate_blocks(model, ragged_blocks(model, data), false, false, {}, nullptr, &terms);
  return terms;
}

BoundValue evaluate_bound(const LvmogpModel& model, const ObservationSet& data,
                          const BoundOptions& options, ModelGradient* grad) {
  return evaluate_any(model, data, false, options, grad);
}

BoundValue evaluate_bound_whitened(const LvmogpModel& whitened, const ObservationSet& data,
                                   const BoundOptions& options, ModelGradient* grad) {
  return evaluate_any(whitened, data, true, options, grad);
}

}  // namespace lvmogp
