#include "lvmogp/model.hpp"

#include <cmath>
#include <sstream>

namespace lvmogp {

namespace {

void check_distinct_rows(const Matrix& Z, const char* name) {
  for (Index i = 0; i < Z.rows(); ++i) {
    for (Index j = 0; j < i; ++j) {
      if ((Z.row(i) - Z.row(j)).cwiseAbs().maxCoeff() == 0.0) {
        std::ostringstream os;
        os << name << " rows " << j << " and " << i << " are identical";
        throw InvalidArgument(os.str());
      }
    }
  }
}

void check_lower_factor(const Matrix& L, const char* name) {
  if (L.rows() != L.cols() || L.rows() == 0) throw InvalidArgument(std::string(name) + " must be square");
  if (!L.allFinite()) throw InvalidArgument(std::string(name) + " has non-finite entries");
  if (L.diagonal().minCoeff() <= 0.0) throw InvalidArgument(std::string(name) + " needs a positive diagonal");
  if (!L.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0.0)) {
    throw InvalidArgument(std::string(name) + " must be lower triangular");
  }
}

}  // namespace

void InducingInputs::validate() const {
  if (Z_H.rows() < 1 || Z_X.rows() < 1) throw InvalidArgument("need at least one inducing input per space");
  if (!Z_H.allFinite() || !Z_X.allFinite()) throw InvalidArgument("inducing inputs must be finite");
  check_distinct_rows(Z_H, "Z_H");
  check_distinct_rows(Z_X, "Z_X");
}

void KroneckerGaussian::validate() const {
  check_lower_factor(covH_chol, "covH_chol");
  check_lower_factor(covX_chol, "covX_chol");
  if (mean.rows() != covX_chol.rows() || mean.cols() != covH_chol.rows()) {
    throw InvalidArgument("q(U) mean must be M_X x M_H");
  }
  if (!mean.allFinite()) throw InvalidArgument("q(U) mean has non-finite entries");
}

void KroneckerGaussian::fix_gauge() {
  const double tr = covH_chol.squaredNorm();
  const double target = static_cast<double>(covH_chol.rows());
  const double c = std::sqrt(target / tr);
  covH_chol *= c;
  covX_chol /= c;
}

void GridObservations::validate() const {
  if (X.rows() < 1 || X.cols() < 1) throw InvalidArgument("grid data needs at least one input");
  if (Y.rows() != X.rows()) throw InvalidArgument("grid data: Y must have one row per input");
  if (Y.cols() < 1) throw InvalidArgument("grid data needs at least one condition");
  if (!X.allFinite() || !Y.allFinite()) throw InvalidArgument("grid data must be finite and complete");
}

Index RaggedObservations::total_points() const {
  Index n = 0;
  for (const auto& c : conditions) n += c.y.size();
  return n;
}

void RaggedObservations::validate(Index dims) const {
  if (conditions.empty()) throw InvalidArgument("ragged data needs at least one condition");
  for (std::size_t d = 0; d < conditions.size(); ++d) {
    const auto& c = conditions[d];
    if (c.X.rows() != c.y.size()) {
      throw InvalidArgument("ragged data: condition " + std::to_string(d) + " has mismatched X/y");
    }
    if (c.y.size() > 0 && c.X.cols() != dims) {
      throw InvalidArgument("ragged data: condition " + std::to_string(d) + " has wrong input dimension");
    }
    if (!c.X.allFinite() || !c.y.allFinite()) throw InvalidArgument("ragged data must be finite");
  }
  if (total_points() < 1) throw InvalidArgument("ragged data needs at least one observation");
}

RaggedObservations RaggedObservations::from_grid(const GridObservations& grid) {
  RaggedObservations r;
  for (Index d = 0; d < grid.Y.cols(); ++d) r.conditions.push_back({grid.X, grid.Y.col(d)});
  return r;
}

Index num_conditions(const ObservationSet& data) {
  return std::visit([](const auto& d) { return d.num_conditions(); }, data);
}

Index input_dims(const ObservationSet& data) {
  if (const auto* g = std::get_if<GridObservations>(&data)) return g->X.cols();
  for (const auto& c : std::get<RaggedObservations>(data).conditions) {
    if (c.y.size() > 0) return c.X.cols();
  }
  return 0;
}

void LvmogpModel::validate() const {
  kernel_x.validate();
  kernel_h.validate();
  latent.validate();
  inducing.validate();
  q_u.validate();
  if (noise_variance.size() != 1 && noise_variance.size() != num_conditions()) {
    throw InvalidArgument("noise_variance must hold one value or one per condition");
  }
  if (!noise_variance.allFinite() || noise_variance.minCoeff() <= 0.0) {
    throw InvalidArgument("noise variances must be positive");
  }
  if (kernel_h.dims() != latent.dims() || inducing.Z_H.cols() != latent.dims()) {
    throw InvalidArgument("latent dimension mismatch between k_H, q(H) and Z_H");
  }
  if (inducing.Z_X.cols() != kernel_x.dims()) throw InvalidArgument("input dimension mismatch between k_X and Z_X");
  if (q_u.mean.rows() != inducing.num_input() || q_u.mean.cols() != inducing.num_latent()) {
    throw InvalidArgument("q(U) dimensions do not match the inducing inputs");
  }
}

}  // namespace lvmogp
