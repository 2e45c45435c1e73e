#ifndef LVMOGP_KERNELS_HPP
#define LVMOGP_KERNELS_HPP

#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "lvmogp/errors.hpp"

namespace lvmogp {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelKind { rbf, linear };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(std::string_view name);

/// Hyperparameters of a stationary ARD kernel.
///
/// For `rbf`:    k(a, b) = variance * exp(-0.5 * sum_q (a_q - b_q)^2 / l_q^2)
/// For `linear`: k(a, b) = variance * sum_q a_q b_q / l_q^2
///
/// The linear form only exists so a latent kernel can reproduce an explicit
/// coregionalization matrix; everything that is trained uses `rbf`.
struct KernelParams {
  KernelKind kind = KernelKind::rbf;
  double variance = 1.0;
  Vector lengthscales;

  static KernelParams rbf(double variance, Vector lengthscales);
  static KernelParams linear(double variance, Vector lengthscales);

  Index dims() const { return lengthscales.size(); }

  /// Throws InvalidArgument if a hyperparameter is non-positive or non-finite.
  void validate() const;
};

/// Cross-covariance k(A_i, B_j). A is n x Q, B is m x Q.
Matrix kernel_matrix(const KernelParams& params, const Matrix& A, const Matrix& B);

/// Same as kernel_matrix but requires the RBF-ARD family.
Matrix rbf_ard(const KernelParams& params, const Matrix& A, const Matrix& B);

/// diag k(A_i, A_i).
Vector kernel_diag(const KernelParams& params, const Matrix& A);

/// Gradient of a scalar objective with respect to log-hyperparameters.
struct KernelGradient {
  double log_variance = 0.0;
  Vector log_lengthscales;

  explicit KernelGradient(Index dims = 0) : log_lengthscales(Vector::Zero(dims)) {}
  KernelGradient& operator+=(const KernelGradient& other);
};

/// Chain rule through K = kernel_matrix(params, A, B).
///
/// `G` is dObjective/dK (n x m, not necessarily symmetric) and `K` the matrix
/// it was computed at. Contributions are added to `grad`, and to `dA` / `dB`
/// when non-null. Passing the same accumulator for dA and dB handles K(Z, Z).
void accumulate_kernel_gradient(const KernelParams& params, const Matrix& A, const Matrix& B,
                                const Matrix& K, const Matrix& G, KernelGradient& grad,
                                Matrix* dA, Matrix* dB);

/// A symmetric matrix together with its (jittered) Cholesky factor.
///
/// A matrix whose Cholesky pivots all exceed 1e-8 * mean(diag) is used as is,
/// unless `always_jitter` is set. Otherwise jitter starts at 1e-8 * mean(diag) and grows by x10 up to
/// 1e-2 * mean(diag); past that the factorization fails with a NumericalError
/// naming the matrix.
class CholeskyFactor {
 public:
  static constexpr double kInitialRelativeJitter = 1e-8;
  static constexpr double kMaxRelativeJitter = 1e-2;

  CholeskyFactor() = default;
  /// `always_jitter` skips the unjittered attempt. Inducing covariances use it
  /// so that objectives built on them stay continuous in the kernel parameters.
  CholeskyFactor(const Matrix& K, std::string_view name = "K", bool always_jitter = false);

  Index size() const { return matrix_.rows(); }
  /// The jittered matrix that was actually factorized.
  const Matrix& matrix() const { return matrix_; }
  double jitter() const { return jitter_; }
  Matrix lower() const { return llt_.matrixL(); }
  double log_det() const;

  Matrix solve(const Matrix& B) const { return llt_.solve(B); }
  Vector solve(const Vector& b) const { return llt_.solve(b); }
  /// L^{-1} B.
  Matrix solve_lower(const Matrix& B) const;
  /// Explicit inverse, for the small inducing-point matrices only.
  Matrix inverse() const;

 private:
  Matrix matrix_;
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

/// K^{-1} B through the jittered Cholesky factor; never forms K^{-1}.
Matrix chol_solve(const Matrix& K, const Matrix& B);

/// (A kron B) x without materializing the Kronecker product, using
/// (A kron B) vec(X) = vec(B X A^T) with column-major vec.
Vector kron_matvec(const Matrix& A, const Matrix& B, const Vector& x);

/// Dense Kronecker product; used by the reference bound and by tests.
Matrix kron(const Matrix& A, const Matrix& B);

/// Column-major vectorization: entry (n, d) of an N x D matrix lands at d*N + n.
Vector vec(const Matrix& Y);
Matrix unvec(const Vector& v, Index rows, Index cols);

}  // namespace lvmogp

#endif  // LVMOGP_KERNELS_HPP
