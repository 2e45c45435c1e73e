#ifndef LVMOGP_EXPERIMENTS_HPP
#define LVMOGP_EXPERIMENTS_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lvmogp/baselines.hpp"
#include "lvmogp/datasets.hpp"
#include "lvmogp/training.hpp"

namespace lvmogp {

enum class ModelVariant { lvmogp, gp_ind, lmc, gp_oh, gp_wo };

std::string to_string(ModelVariant v);
ModelVariant model_variant_from_string(const std::string& name);

struct ModelSettings {
  Index latent_dims = 2;
  Index num_latent_inducing = 30;
  Index num_input_inducing = 10;
  TrainConfig train;
  BaselineConfig baseline;
  /// Fit on (y - mean) / sd of the training targets; predictions are mapped back.
  bool standardize_outputs = true;
};

nlohmann::json to_json(const ModelSettings& s);
/// Keys present in `j` override `base`.
ModelSettings model_settings_from_json(const nlohmann::json& j, ModelSettings base = {});

struct TrainedModel {
  ModelVariant variant = ModelVariant::lvmogp;
  std::variant<LvmogpModel, BaselineModel> model;
  std::vector<std::string> condition_names;
  double output_mean = 0.0;
  double output_scale = 1.0;
  /// Bound (or baseline objective) per iteration, on the standardized scale.
  std::vector<double> trace;

  Index num_conditions() const;
  const LvmogpModel& lvmogp() const;
};

/// Fits one model variant. Seeds come only from settings, so repeated calls agree exactly.
TrainedModel train_variant(ModelVariant variant, const ObservationSet& data,
                           const std::vector<std::string>& condition_names, const ModelSettings& settings);

/// Predictive marginals at (X.row(i), ids[i]) on the original output scale.
PredictiveMoments predict_trained(const TrainedModel& model, const Matrix& X, const std::vector<Index>& ids,
                                  bool with_noise = false);

/// LVMOGP only: fits q(h*) from the support set, then predicts at X.
PredictiveMoments predict_new_condition(const TrainedModel& model, const Matrix& support_X,
                                        const Vector& support_y, const Matrix& X, bool with_noise = false,
                                        LatentPosterior* latent = nullptr);

nlohmann::json to_json(const TrainedModel& m);
TrainedModel trained_model_from_json(const nlohmann::json& j);
/// Versioned JSON text; identical models give identical files.
std::string serialize_model(const TrainedModel& m);
void save_model(const TrainedModel& m, const std::string& path);
TrainedModel load_model(const std::string& path);

double rmse(const Vector& predicted, const Vector& target);

enum class ExperimentKind { synthetic_grid, synthetic_missing, servo, sensor, braking_toy };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::synthetic_grid;
  std::vector<ModelVariant> variants;
  std::string dataset_path;  // servo / sensor CSV
  ModelSettings settings;
  Index repeats = 20;
  std::uint64_t base_seed = 0;
  Index jobs = 1;
  SyntheticSpec synthetic;
  BrakingSpec braking;
  SensorOptions sensor;
  double train_fraction = 0.7;  // servo partitions
  /// Curves are written for repeat 0 when inputs are one-dimensional.
  bool write_curves = true;
  Index curve_points = 100;

  /// Model sizes and variants used for each experiment by default.
  static ExperimentConfig defaults(ExperimentKind kind);
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Applies the keys of a JSON config on top of `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base);

struct Curve {
  ModelVariant variant;
  Matrix rows;  // condition, x, mean, variance
};

struct RepeatResult {
  Index repeat = 0;
  std::uint64_t seed = 0;
  std::map<ModelVariant, double> rmse;
  std::map<ModelVariant, std::string> failures;
  std::map<ModelVariant, double> seconds;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<Curve> curves;
  Matrix train_points;  // condition, x, y (for curve plots)
};

struct ModelSummary {
  std::vector<double> rmse;  // successful repeats, in repeat order
  double mean = 0.0;
  double std = 0.0;  // population standard deviation; 0 for one repeat
  std::vector<std::pair<Index, std::string>> failures;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RepeatResult> repeats;
  std::map<ModelVariant, ModelSummary> summary;
  std::string rmse_scale;

  nlohmann::json metrics() const;
};

inline constexpr int kMetricsSchemaVersion = 1;

/// Runs every repeat (over `config.jobs` worker threads) and merges the results
/// in repeat order. Failed fits are recorded and excluded from the summary.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// metrics.json, boxplot.csv (model,repeat,rmse) and curves/ under `dir`.
void write_experiment_outputs(const ExperimentResult& result, const std::string& dir);

/// Braking toy: R^2 of the principal coordinate of the q(H) means against 1/mu,
/// and one-shot prediction for a held-out surface (LVMOGP vs GP-WO).
struct BrakingAnalysis {
  double r_squared = 0.0;
  double lvmogp_new_rmse = 0.0;
  double gp_wo_new_rmse = 0.0;
  Vector principal_coordinate;  // one per training condition
  Vector inverse_friction;
};

BrakingAnalysis analyze_braking(const ModelSettings& settings, const BrakingSpec& spec, Index support_runs = 1);

}  // namespace lvmogp

#endif  // LVMOGP_EXPERIMENTS_HPP
