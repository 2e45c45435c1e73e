#ifndef LVMOGP_DATASETS_HPP
#define LVMOGP_DATASETS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvmogp/model.hpp"

namespace lvmogp {

/// Held-out points, one row per (input, condition) pair.
struct TestSet {
  Matrix X;
  Vector y;
  std::vector<Index> ids;

  Index size() const { return y.size(); }
};

/// Per-column affine normalization z = (v - mean) / scale.
struct Normalization {
  Vector mean;
  Vector scale;

  static Normalization identity(Index columns);
  /// Mean and sample standard deviation of each column, ignoring NaN entries.
  /// Constant columns get scale 1.
  static Normalization fit(const Matrix& values);
  double apply(double v, Index column) const { return (v - mean[column]) / scale[column]; }
  double invert(double z, Index column) const { return z * scale[column] + mean[column]; }
};

struct TabularDataset {
  std::string name;
  ObservationSet train;
  TestSet test;
  std::vector<std::string> condition_names;
  /// For sources laid out on an input x condition table (synthetic grid,
  /// sensor): 1 where the entry is a training / test target, 0 elsewhere.
  Matrix train_mask;
  Matrix test_mask;
  /// Output normalization per condition (identity unless the loader z-scores).
  Normalization output_normalization;
  nlohmann::json metadata;

  Index num_conditions() const { return lvmogp::num_conditions(train); }
};

/// Draws vec(F) ~ N(0, Kh kron Kx) as Lx E Lh^T with jittered Cholesky factors.
Matrix sample_kronecker_gp(const Matrix& Kx, const Matrix& Kh, std::mt19937_64& rng);

struct SyntheticSpec {
  Index num_inputs = 100;        // grid: total inputs, half for training
  Index num_conditions = 40;
  Index latent_dims = 2;
  Index input_dims = 1;
  double input_low = -1.0, input_high = 1.0;
  KernelParams kernel_x = KernelParams::rbf(1.0, Vector::Constant(1, 0.2));
  KernelParams kernel_h = KernelParams::rbf(1.0, Vector::Constant(2, 2.0));
  double noise_variance = 0.3;
  // missing-data layout
  Index groups = 10;
  Index conditions_per_group = 4;
  Index total_train = 200;
  Index num_test_inputs = 50;  // shared by every condition
  std::uint64_t seed = 0;

  void validate(bool missing) const;
};

struct SyntheticDataset {
  TabularDataset data;
  Matrix latent;  // true h_d, D x Q_H
};

/// Shared inputs, half training (noisy) and half test (noiseless targets).
SyntheticDataset gen_synthetic_grid(const SyntheticSpec& spec);

/// Three uniform stick breaks: u1, (1-u1)u2, (1-u1)(1-u2)u3, remainder.
std::vector<double> stick_breaking_weights(std::mt19937_64& rng);
/// Splits `total` into integer counts proportional to `weights` (largest remainder).
std::vector<Index> allocate_counts(const std::vector<double>& weights, Index total);

/// Conditions in equal-share groups; within a group the share is split by
/// stick breaking. Each condition gets its own uniform training inputs; the
/// noiseless test targets sit on inputs shared by all conditions.
SyntheticDataset gen_synthetic_missing(const SyntheticSpec& spec);

inline constexpr double kGravity = 9.81;

/// Stopping distance v0^2 / (2 mu g).
double braking_distance(double speed, double friction, double g = kGravity);

struct BrakingSpec {
  Index conditions = 10;
  Index runs_per_condition = 5;
  double friction_low = 0.3, friction_high = 1.0;
  double speed_low = 5.0, speed_high = 40.0;
  double noise_sd = 2.0;
  Index test_speeds = 20;  // noiseless targets on an even speed grid
  std::uint64_t seed = 0;
};

struct BrakingDataset {
  TabularDataset data;
  Vector friction;  // true mu_d
};

BrakingDataset gen_braking_toy(const BrakingSpec& spec);

/// Servo table: motor,screw,pgain,vgain,class. Condition = (motor, screw)
/// over levels A..E (25 ids); inputs are the two gains, output the rise time.
/// Everything is returned as training data; see split_train_test.
TabularDataset load_servo_csv(const std::string& path);

struct SensorOptions {
  double bucket_minutes = 15.0;
  double keep_fraction = 0.05;
  std::uint64_t mask_seed = 0;
};

/// Sensor table: timestamp column plus one column per channel. Readings are
/// averaged in fixed buckets from the first timestamp, each channel is
/// z-scored, and a random keep_fraction of the available entries is kept for
/// training; the rest are test targets.
TabularDataset load_sensor_csv(const std::string& path, const SensorOptions& options = {});

/// Generic table: a `condition` column (any labels), a `y` column, and the
/// remaining columns as numeric inputs. All rows are training data.
TabularDataset load_generic_csv(const std::string& path);

/// Random split of every training point: round(train_fraction * n) stay in
/// training, the rest move to the test set.
TabularDataset split_train_test(const TabularDataset& all, double train_fraction, std::uint64_t seed);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> lines;  // 1-based file line of each row
};

/// Comma-separated table with a header row. Blank lines are skipped, fields
/// trimmed and unquoted; a row with the wrong field count is a ParseError.
CsvTable read_csv(const std::string& path);

/// Points to predict at: a `condition` column plus numeric inputs (a `y`
/// column, if present, is ignored). A header-only file gives zero rows.
struct QueryTable {
  Matrix X;
  std::vector<std::string> conditions;
  std::vector<std::string> input_names;
};
QueryTable load_query_csv(const std::string& path);

/// Generic-schema CSV files (x0..x{Q-1}, condition, y); the test file is
/// skipped when its path is empty.
void write_generic_csv(const TabularDataset& data, const std::string& train_path, const std::string& test_path = {});

/// Writes the metadata JSON next to a dataset (e.g. the sensor masking seed).
void write_metadata_sidecar(const TabularDataset& data, const std::string& path);

}  // namespace lvmogp

#endif  // LVMOGP_DATASETS_HPP
