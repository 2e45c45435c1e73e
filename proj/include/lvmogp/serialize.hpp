#ifndef LVMOGP_SERIALIZE_HPP
#define LVMOGP_SERIALIZE_HPP

#include <json.hpp>

#include "lvmogp/baselines.hpp"
#include "lvmogp/training.hpp"

namespace lvmogp {

/// Bumped whenever a stored field changes meaning.
inline constexpr int kModelFormatVersion = 1;

// Matrices are stored as arrays of rows. Doubles are written with enough
// digits to round-trip exactly.
nlohmann::json matrix_to_json(const Matrix& A);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KernelParams& k);
KernelParams kernel_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LvmogpModel& m);
/// Throws ParseError (line 0) on missing or malformed fields.
LvmogpModel lvmogp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BaselineModel& m);
BaselineModel baseline_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
/// Keys that are present override `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace lvmogp

#endif  // LVMOGP_SERIALIZE_HPP
