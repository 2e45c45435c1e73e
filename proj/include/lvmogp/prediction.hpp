#ifndef LVMOGP_PREDICTION_HPP
#define LVMOGP_PREDICTION_HPP

#include <cstdint>
#include <vector>

#include "lvmogp/model.hpp"

namespace lvmogp {

/// Marginal predictive moments, one entry per requested (input, condition) pair.
struct PredictiveMoments {
  Vector mean;
  Vector variance;
};

struct PredictiveCovariance {
  Vector mean;
  Matrix covariance;
};

/// Variances in [-1e-10, 0) are clamped to zero; anything lower is reported as
/// a NumericalError.
void clamp_variances(Vector& variance, const char* what);

/// Noiseless predictive q(f*) at the pairs (X.row(i), H.row(i)):
///   mean  k*u Kuu^-1 vec(M)
///   var   k** - k*u Kuu^-1 ku* + k*u Kuu^-1 SigmaU Kuu^-1 ku*
/// with Kuu = K^H kron K^X, evaluated factor by factor. `noise` (one value, or
/// one per pair) is added to the variances when given.
PredictiveMoments predict_given_latents(const LvmogpModel& model, const Matrix& X, const Matrix& H,
                                        const Vector& noise = Vector());

/// Same pairs with the full joint covariance; meant for small requests.
PredictiveCovariance predict_given_latents_full(const LvmogpModel& model, const Matrix& X,
                                                const Matrix& H);

/// Moment-matched prediction for trained conditions, integrating over q(h_d):
/// pair i is (X.row(i), condition_ids[i]).
PredictiveMoments predict_existing_conditions(const LvmogpModel& model, const Matrix& X,
                                              const std::vector<Index>& condition_ids,
                                              bool with_noise = false);

/// Moment-matched prediction for inputs X under an explicit latent posterior
/// (one row), e.g. the result of infer_new_condition. `noise` is added when positive.
PredictiveMoments predict_with_latent(const LvmogpModel& model, const Matrix& X,
                                      const LatentPosterior& latent, double noise = 0.0);

struct NewConditionOptions {
  Index steps = 200;
  double learning_rate = 0.05;
  /// Also start from every trained q(h_d) and keep the best final bound.
  bool multi_start = true;
};

struct NewConditionResult {
  LatentPosterior posterior;  // one row
  double bound = 0.0;         // missing-data bound of the single-condition problem
};

/// Fits q(h*) for an unseen condition from its observations with every other
/// model quantity frozen. The noise variance is the shared one, or the mean of
/// the per-condition values. No observations gives the prior N(0, I).
NewConditionResult infer_new_condition(const LvmogpModel& model, const Matrix& X, const Vector& y,
                                       const NewConditionOptions& options = {});

}  // namespace lvmogp

#endif  // LVMOGP_PREDICTION_HPP
