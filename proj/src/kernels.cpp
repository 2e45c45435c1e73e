#include "lvmogp/kernels.hpp"

#include <cmath>
#include <sstream>

namespace lvmogp {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rbf:
      return "rbf";
    case KernelKind::linear:
      return "linear";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(std::string_view name) {
  if (name == "rbf") return KernelKind::rbf;
  if (name == "linear") return KernelKind::linear;
  throw InvalidArgument("unknown kernel kind '" + std::string(name) + "'");
}

KernelParams KernelParams::rbf(double variance, Vector lengthscales) {
  KernelParams p{KernelKind::rbf, variance, std::move(lengthscales)};
  p.validate();
  return p;
}

KernelParams KernelParams::linear(double variance, Vector lengthscales) {
  KernelParams p{KernelKind::linear, variance, std::move(lengthscales)};
  p.validate();
  return p;
}

void KernelParams::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw InvalidArgument("kernel variance must be positive and finite");
  }
  if (lengthscales.size() == 0) throw InvalidArgument("kernel needs at least one lengthscale");
  for (Index q = 0; q < lengthscales.size(); ++q) {
    if (!(lengthscales[q] > 0.0) || !std::isfinite(lengthscales[q])) {
      throw InvalidArgument("kernel lengthscales must be positive and finite");
    }
  }
}

namespace {

void check_dims(const KernelParams& params, const Matrix& A, const Matrix& B) {
  params.validate();
  if (A.cols() != params.dims() || B.cols() != params.dims()) {
    std::ostringstream os;
    os << "kernel dimension mismatch: lengthscales " << params.dims() << ", A has " << A.cols()
       << " columns, B has " << B.cols();
    throw InvalidArgument(os.str());
  }
}

}  // namespace

Matrix kernel_matrix(const KernelParams& params, const Matrix& A, const Matrix& B) {
  check_dims(params, A, B);
  const Index n = A.rows();
  const Index m = B.rows();
  const Index Q = params.dims();
  const Eigen::ArrayXd inv_l2 = params.lengthscales.array().square().inverse();
  Matrix K(n, m);
  if (params.kind == KernelKind::rbf) {
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) {
        double r2 = 0.0;
        for (Index q = 0; q < Q; ++q) {
          const double diff = A(i, q) - B(j, q);
          r2 += diff * diff * inv_l2[q];
        }
        K(i, j) = params.variance * std::exp(-0.5 * r2);
      }
    }
  } else {
    K = params.variance * (A * inv_l2.matrix().asDiagonal() * B.transpose());
  }
  return K;
}

Matrix rbf_ard(const KernelParams& params, const Matrix& A, const Matrix& B) {
  if (params.kind != KernelKind::rbf) throw InvalidArgument("rbf_ard called with a non-RBF kernel");
  return kernel_matrix(params, A, B);
}

Vector kernel_diag(const KernelParams& params, const Matrix& A) {
  params.validate();
  if (A.cols() != params.dims()) throw InvalidArgument("kernel dimension mismatch in kernel_diag");
  if (params.kind == KernelKind::rbf) return Vector::Constant(A.rows(), params.variance);
  const Eigen::ArrayXd inv_l2 = params.lengthscales.array().square().inverse();
  return params.variance * (A.array().square().matrix() * inv_l2.matrix());
}

KernelGradient& KernelGradient::operator+=(const KernelGradient& other) {
  log_variance += other.log_variance;
  if (log_lengthscales.size() == 0) {
    log_lengthscales = other.log_lengthscales;
  } else if (other.log_lengthscales.size() != 0) {
    log_lengthscales += other.log_lengthscales;
  }
  return *this;
}

void accumulate_kernel_gradient(const KernelParams& params, const Matrix& A, const Matrix& B,
                                const Matrix& K, const Matrix& G, KernelGradient& grad,
                                Matrix* dA, Matrix* dB) {
  const Index Q = params.dims();
  if (grad.log_lengthscales.size() == 0) grad.log_lengthscales = Vector::Zero(Q);
  const Matrix W = G.cwiseProduct(K);
  grad.log_variance += W.sum();
  const Eigen::ArrayXd inv_l2 = params.lengthscales.array().square().inverse();

  if (params.kind == KernelKind::rbf) {
    const Vector row_sum = W.rowwise().sum();
    const Vector col_sum = W.colwise().sum().transpose();
    for (Index q = 0; q < Q; ++q) {
      const auto a = A.col(q);
      const auto b = B.col(q);
      const Vector Wb = W * b;
      const Vector Wta = W.transpose() * a;
      const double cross = a.dot(Wb);
      const double sq = a.array().square().matrix().dot(row_sum) +
                        b.array().square().matrix().dot(col_sum) - 2.0 * cross;
      grad.log_lengthscales[q] += sq * inv_l2[q];
      if (dA) dA->col(q) -= (a.cwiseProduct(row_sum) - Wb) * inv_l2[q];
      if (dB) dB->col(q) += (Wta - b.cwiseProduct(col_sum)) * inv_l2[q];
    }
  } else {
    // K = v * A diag(1/l^2) B^T
    const double v = params.variance;
    for (Index q = 0; q < Q; ++q) {
      const auto a = A.col(q);
      const auto b = B.col(q);
      grad.log_lengthscales[q] += -2.0 * v * inv_l2[q] * a.dot(G * b);
      if (dA) dA->col(q) += v * inv_l2[q] * (G * b);
      if (dB) dB->col(q) += v * inv_l2[q] * (G.transpose() * a);
    }
  }
}

CholeskyFactor::CholeskyFactor(const Matrix& K, std::string_view name, bool always_jitter) {
  if (K.rows() != K.cols()) {
    throw InvalidArgument("Cholesky of non-square matrix '" + std::string(name) + "'");
  }
  const Index n = K.rows();
  if (n == 0) throw InvalidArgument("Cholesky of empty matrix '" + std::string(name) + "'");
  if (!K.allFinite()) {
    throw NumericalError("matrix '" + std::string(name) + "' has non-finite entries",
                         std::string(name));
  }
  const double scale = K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument("matrix '" + std::string(name) + "' is not symmetric");
  }
  const double mean_diag = K.diagonal().mean();
  if (!(mean_diag > 0.0)) {
    throw NumericalError("matrix '" + std::string(name) + "' has non-positive mean diagonal",
                         std::string(name));
  }
  // Clearly positive definite matrices are factorized as they are.
  jitter_ = 0.0;
  if (!always_jitter) {
    matrix_ = K;
    llt_.compute(matrix_);
    if (llt_.info() == Eigen::Success) {
      const auto diag = llt_.matrixLLT().diagonal();
      if (diag.allFinite() && diag.array().square().minCoeff() >= kInitialRelativeJitter * mean_diag) return;
    }
  }
  for (double rel = kInitialRelativeJitter; rel <= kMaxRelativeJitter * (1.0 + 1e-9); rel *= 10.0) {
    jitter_ = rel * mean_diag;
    matrix_ = K;
    matrix_.diagonal().array() += jitter_;
    llt_.compute(matrix_);
    if (llt_.info() == Eigen::Success) {
      const auto diag = llt_.matrixLLT().diagonal();
      if (diag.allFinite() && diag.minCoeff() > 0.0) return;
    }
  }
  std::ostringstream os;
  os << "Cholesky factorization of '" << name << "' failed with jitter " << jitter_;
  throw NumericalError(os.str(), std::string(name), jitter_);
}

double CholeskyFactor::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Matrix CholeskyFactor::solve_lower(const Matrix& B) const {
  return llt_.matrixL().solve(B);
}

Matrix CholeskyFactor::inverse() const {
  Matrix inv = llt_.solve(Matrix::Identity(size(), size()));
  return 0.5 * (inv + inv.transpose());
}

Matrix chol_solve(const Matrix& K, const Matrix& B) {
  if (B.rows() != K.rows()) throw InvalidArgument("chol_solve: right-hand side has wrong row count");
  return CholeskyFactor(K, "K").solve(B);
}

Vector kron_matvec(const Matrix& A, const Matrix& B, const Vector& x) {
  if (x.size() != A.cols() * B.cols()) {
    std::ostringstream os;
    os << "kron_matvec: vector length " << x.size() << " does not match " << A.cols() << "*"
       << B.cols();
    throw InvalidArgument(os.str());
  }
  const Eigen::Map<const Matrix> X(x.data(), B.cols(), A.cols());
  const Matrix R = B * X * A.transpose();
  return Eigen::Map<const Vector>(R.data(), R.size());
}

Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    }
  }
  return out;
}

Vector vec(const Matrix& Y) { return Eigen::Map<const Vector>(Y.data(), Y.size()); }

Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw InvalidArgument("unvec: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace lvmogp
