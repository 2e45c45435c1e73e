#include "lvmogp/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "lvmogp/prediction.hpp"
#include "lvmogp/serialize.hpp"

namespace lvmogp {

using nlohmann::json;

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::lvmogp:
      return "lvmogp";
    case ModelVariant::gp_ind:
      return "gp-ind";
    case ModelVariant::lmc:
      return "lmc";
    case ModelVariant::gp_oh:
      return "gp-oh";
    case ModelVariant::gp_wo:
      return "gp-wo";
  }
  return "unknown";
}

ModelVariant model_variant_from_string(const std::string& name) {
  for (auto v : {ModelVariant::lvmogp, ModelVariant::gp_ind, ModelVariant::lmc, ModelVariant::gp_oh, ModelVariant::gp_wo}) {
    if (name == to_string(v)) return v;
  }
  throw InvalidArgument("unknown model '" + name + "' (expected lvmogp, gp-ind, lmc, gp-oh or gp-wo)");
}

namespace {

BaselineKind baseline_kind(ModelVariant v) {
  switch (v) {
    case ModelVariant::gp_ind:
      return BaselineKind::gp_ind;
    case ModelVariant::lmc:
      return BaselineKind::lmc;
    case ModelVariant::gp_oh:
      return BaselineKind::gp_oh;
    case ModelVariant::gp_wo:
      return BaselineKind::gp_wo;
    case ModelVariant::lvmogp:
      break;
  }
  throw InvalidArgument("lvmogp is not a baseline");
}

void all_targets(const ObservationSet& data, std::vector<double>& out) {
  if (const auto* g = std::get_if<GridObservations>(&data)) {
    out.assign(g->Y.data(), g->Y.data() + g->Y.size());
  } else {
    for (const auto& c : std::get<RaggedObservations>(data).conditions) out.insert(out.end(), c.y.data(), c.y.data() + c.y.size());
  }
}

ObservationSet standardized(const ObservationSet& data, double mean, double scale) {
  ObservationSet out = data;
  if (auto* g = std::get_if<GridObservations>(&out)) {
    g->Y = (g->Y.array() - mean) / scale;
  } else {
    for (auto& c : std::get<RaggedObservations>(out).conditions) c.y = (c.y.array() - mean) / scale;
  }
  return out;
}

}  // namespace

json to_json(const ModelSettings& s) {
  return {{"latent_dims", s.latent_dims},
          {"num_latent_inducing", s.num_latent_inducing},
          {"num_input_inducing", s.num_input_inducing},
          {"train", to_json(s.train)},
          {"baseline",
           {{"optimizer", to_string(s.baseline.optimizer)},
            {"max_iters", s.baseline.max_iters},
            {"learning_rate", s.baseline.learning_rate},
            {"tolerance", s.baseline.tolerance},
            {"exact_limit", s.baseline.exact_limit},
            {"num_inducing", s.baseline.num_inducing}}},
          {"standardize_outputs", s.standardize_outputs}};
}

ModelSettings model_settings_from_json(const json& j, ModelSettings s) {
  if (!j.is_object()) throw InvalidArgument("model settings must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "latent_dims") s.latent_dims = v.get<Index>();
      else if (key == "num_latent_inducing") s.num_latent_inducing = v.get<Index>();
      else if (key == "num_input_inducing") s.num_input_inducing = v.get<Index>();
      else if (key == "train") s.train = train_config_from_json(v, s.train);
      else if (key == "standardize_outputs") s.standardize_outputs = v.get<bool>();
      else if (key == "baseline") {
        for (const auto& [bk, bv] : v.items()) {
          if (bk == "optimizer") s.baseline.optimizer = optimizer_from_string(bv.get<std::string>());
          else if (bk == "max_iters") s.baseline.max_iters = bv.get<Index>();
          else if (bk == "learning_rate") s.baseline.learning_rate = bv.get<double>();
          else if (bk == "tolerance") s.baseline.tolerance = bv.get<double>();
          else if (bk == "exact_limit") s.baseline.exact_limit = bv.get<Index>();
          else if (bk == "num_inducing") s.baseline.num_inducing = bv.get<Index>();
          else throw InvalidArgument("unknown baseline option '" + bk + "'");
        }
      } else {
        throw InvalidArgument("unknown model option '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model settings: ") + e.what());
  }
  if (s.latent_dims < 1 || s.num_latent_inducing < 1 || s.num_input_inducing < 1) {
    throw InvalidArgument("Q_H, M_H and M_X must be at least 1");
  }
  return s;
}

Index TrainedModel::num_conditions() const {
  if (const auto* m = std::get_if<LvmogpModel>(&model)) return m->num_conditions();
  return std::get<BaselineModel>(model).num_conditions;
}

const LvmogpModel& TrainedModel::lvmogp() const {
  const auto* m = std::get_if<LvmogpModel>(&model);
  if (!m) throw InvalidArgument("model '" + to_string(variant) + "' has no latent space");
  return *m;
}

TrainedModel train_variant(ModelVariant variant, const ObservationSet& data,
                           const std::vector<std::string>& condition_names, const ModelSettings& settings) {
  TrainedModel out;
  out.variant = variant;
  out.condition_names = condition_names;
  if (settings.standardize_outputs) {
    std::vector<double> y;
    all_targets(data, y);
    if (!y.empty()) {
      const Eigen::Map<const Vector> v(y.data(), static_cast<Index>(y.size()));
      out.output_mean = v.mean();
      const double var = y.size() > 1 ? (v.array() - out.output_mean).square().sum() / static_cast<double>(y.size() - 1) : 0.0;
      out.output_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  const ObservationSet fit_data = standardized(data, out.output_mean, out.output_scale);
  if (variant == ModelVariant::lvmogp) {
    InitOptions init{settings.train.init, settings.train.per_condition_noise};
    const auto m0 = init_model(fit_data, settings.latent_dims, settings.num_latent_inducing,
                               settings.num_input_inducing, settings.train.seed, init);
    auto res = fit(m0, fit_data, settings.train);
    out.model = std::move(res.model);
    out.trace = std::move(res.trace);
  } else {
    BaselineConfig cfg = settings.baseline;
    cfg.seed = settings.train.seed;
    auto m = fit_baseline(baseline_kind(variant), fit_data, cfg);
    out.trace = {baseline_objective(m)};
    out.model = std::move(m);
  }
  if (out.condition_names.empty()) {
    for (Index d = 0; d < out.num_conditions(); ++d) out.condition_names.push_back(std::to_string(d));
  }
  return out;
}

namespace {

PredictiveMoments rescale(PredictiveMoments p, const TrainedModel& m) {
  p.mean = (p.mean.array() * m.output_scale + m.output_mean).matrix();
  p.variance *= m.output_scale * m.output_scale;
  return p;
}

}  // namespace

PredictiveMoments predict_trained(const TrainedModel& model, const Matrix& X, const std::vector<Index>& ids,
                                  bool with_noise) {
  if (const auto* m = std::get_if<LvmogpModel>(&model.model)) {
    return rescale(predict_existing_conditions(*m, X, ids, with_noise), model);
  }
  return rescale(predict_baseline(std::get<BaselineModel>(model.model), X, ids, with_noise), model);
}

PredictiveMoments predict_new_condition(const TrainedModel& model, const Matrix& support_X, const Vector& support_y,
                                        const Matrix& X, bool with_noise, LatentPosterior* latent) {
  const auto& m = model.lvmogp();
  const Vector y = (support_y.array() - model.output_mean) / model.output_scale;
  const auto post = infer_new_condition(m, support_X, y);
  if (latent) *latent = post.posterior;
  const double noise = with_noise ? m.noise_variance.mean() : 0.0;
  return rescale(predict_with_latent(m, X, post.posterior, noise), model);
}

json to_json(const TrainedModel& m) {
  json model = std::holds_alternative<LvmogpModel>(m.model) ? to_json(std::get<LvmogpModel>(m.model))
                                                            : to_json(std::get<BaselineModel>(m.model));
  return {{"format", "lvmogp-model"},
          {"version", kModelFormatVersion},
          {"variant", to_string(m.variant)},
          {"condition_names", m.condition_names},
          {"output_mean", m.output_mean},
          {"output_scale", m.output_scale},
          {"trace", m.trace},
          {"model", model}};
}

TrainedModel trained_model_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "lvmogp-model") throw ParseError("not an lvmogp model file", 0);
  if (j.value("version", -1) != kModelFormatVersion) {
    throw ParseError("unsupported model file version " + j.value("version", json(-1)).dump(), 0);
  }
  TrainedModel m;
  try {
    m.variant = model_variant_from_string(j.at("variant").get<std::string>());
    m.condition_names = j.at("condition_names").get<std::vector<std::string>>();
    m.output_mean = j.at("output_mean").get<double>();
    m.output_scale = j.at("output_scale").get<double>();
    m.trace = j.at("trace").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  }
  if (!j.contains("model")) throw ParseError("model file: missing field 'model'", 0);
  if (m.variant == ModelVariant::lvmogp) {
    m.model = lvmogp_from_json(j.at("model"));
  } else {
    m.model = baseline_from_json(j.at("model"));
  }
  if (!(m.output_scale > 0.0)) throw ParseError("model file: output_scale must be positive", 0);
  if (static_cast<Index>(m.condition_names.size()) != m.num_conditions()) {
    throw ParseError("model file: condition_names does not match the model", 0);
  }
  return m;
}

std::string serialize_model(const TrainedModel& m) { return to_json(m).dump(1) + "\n"; }

void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << serialize_model(m);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  return trained_model_from_json(j);
}

double rmse(const Vector& predicted, const Vector& target) {
  if (predicted.size() != target.size()) throw InvalidArgument("rmse: size mismatch");
  if (target.size() == 0) throw InvalidArgument("rmse: empty test set");
  return std::sqrt((predicted - target).squaredNorm() / static_cast<double>(target.size()));
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::synthetic_grid:
      return "synthetic-grid";
    case ExperimentKind::synthetic_missing:
      return "synthetic-missing";
    case ExperimentKind::servo:
      return "servo";
    case ExperimentKind::sensor:
      return "sensor";
    case ExperimentKind::braking_toy:
      return "braking-toy";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::synthetic_grid, ExperimentKind::synthetic_missing, ExperimentKind::servo,
                 ExperimentKind::sensor, ExperimentKind::braking_toy}) {
    if (name == to_string(k)) return k;
  }
  throw InvalidArgument("unknown experiment '" + name + "'");
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  auto& s = c.settings;
  s.train.optimizer = OptimizerKind::lbfgs;
  s.train.max_iters = 1000;
  s.train.warmup_iters = 100;
  s.train.tolerance = 1e-9;
  switch (kind) {
    case ExperimentKind::synthetic_grid:
    case ExperimentKind::synthetic_missing:
      c.variants = {ModelVariant::lvmogp, ModelVariant::gp_ind, ModelVariant::lmc};
      s.num_latent_inducing = 30;
      s.num_input_inducing = 10;
      s.train.max_iters = 3000;
      break;
    case ExperimentKind::servo:
      c.variants = {ModelVariant::lvmogp, ModelVariant::lmc, ModelVariant::gp_oh, ModelVariant::gp_wo,
                    ModelVariant::gp_ind};
      s.num_latent_inducing = 5;
      s.num_input_inducing = 10;
      break;
    case ExperimentKind::sensor:
      c.variants = {ModelVariant::lvmogp, ModelVariant::lmc, ModelVariant::gp_ind};
      s.num_latent_inducing = 10;
      s.num_input_inducing = 100;
      break;
    case ExperimentKind::braking_toy:
      c.variants = {ModelVariant::lvmogp, ModelVariant::gp_wo, ModelVariant::gp_ind};
      s.num_latent_inducing = 5;
      s.num_input_inducing = 5;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw InvalidArgument("repeats must be at least 1");
  if (jobs < 1) throw InvalidArgument("jobs must be at least 1");
  if (variants.empty()) throw InvalidArgument("no model variants requested");
  if (curve_points < 2) throw InvalidArgument("curve_points must be at least 2");
  if ((kind == ExperimentKind::servo || kind == ExperimentKind::sensor)) {
    if (dataset_path.empty()) throw InvalidArgument(to_string(kind) + " needs a dataset path");
    if (!std::filesystem::exists(dataset_path)) throw InvalidArgument("dataset '" + dataset_path + "' does not exist");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must be in (0, 1)");
  settings.train.validate();
}

json to_json(const ExperimentConfig& c) {
  std::vector<std::string> variants;
  for (auto v : c.variants) variants.push_back(to_string(v));
  json j = {{"experiment", to_string(c.kind)},
            {"models", variants},
            {"dataset", c.dataset_path},
            {"settings", to_json(c.settings)},
            {"repeats", c.repeats},
            {"seed", c.base_seed},
            {"train_fraction", c.train_fraction},
            {"write_curves", c.write_curves},
            {"curve_points", c.curve_points}};
  if (c.kind == ExperimentKind::synthetic_grid || c.kind == ExperimentKind::synthetic_missing) {
    j["synthetic"] = {{"num_inputs", c.synthetic.num_inputs},
                      {"num_conditions", c.synthetic.num_conditions},
                      {"latent_dims", c.synthetic.latent_dims},
                      {"noise_variance", c.synthetic.noise_variance},
                      {"kernel_x", to_json(c.synthetic.kernel_x)},
                      {"kernel_h", to_json(c.synthetic.kernel_h)},
                      {"groups", c.synthetic.groups},
                      {"conditions_per_group", c.synthetic.conditions_per_group},
                      {"total_train", c.synthetic.total_train},
                      {"num_test_inputs", c.synthetic.num_test_inputs}};
  }
  if (c.kind == ExperimentKind::braking_toy) {
    j["braking"] = {{"conditions", c.braking.conditions},
                    {"runs_per_condition", c.braking.runs_per_condition},
                    {"noise_sd", c.braking.noise_sd},
                    {"test_speeds", c.braking.test_speeds}};
  }
  if (c.kind == ExperimentKind::sensor) {
    j["sensor"] = {{"bucket_minutes", c.sensor.bucket_minutes}, {"keep_fraction", c.sensor.keep_fraction}};
  }
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "experiment") {
        if (experiment_kind_from_string(v.get<std::string>()) != c.kind) {
          throw InvalidArgument("config is for experiment '" + v.get<std::string>() + "'");
        }
      } else if (key == "models") {
        c.variants.clear();
        for (const auto& m : v) c.variants.push_back(model_variant_from_string(m.get<std::string>()));
      } else if (key == "dataset") c.dataset_path = v.get<std::string>();
      else if (key == "settings") c.settings = model_settings_from_json(v, c.settings);
      else if (key == "repeats") c.repeats = v.get<Index>();
      else if (key == "seed") c.base_seed = v.get<std::uint64_t>();
      else if (key == "jobs") c.jobs = v.get<Index>();
      else if (key == "train_fraction") c.train_fraction = v.get<double>();
      else if (key == "write_curves") c.write_curves = v.get<bool>();
      else if (key == "curve_points") c.curve_points = v.get<Index>();
      else if (key == "synthetic") {
        for (const auto& [sk, sv] : v.items()) {
          auto& s = c.synthetic;
          if (sk == "num_inputs") s.num_inputs = sv.get<Index>();
          else if (sk == "num_conditions") s.num_conditions = sv.get<Index>();
          else if (sk == "latent_dims") s.latent_dims = sv.get<Index>();
          else if (sk == "noise_variance") s.noise_variance = sv.get<double>();
          else if (sk == "kernel_x") s.kernel_x = kernel_from_json(sv);
          else if (sk == "kernel_h") s.kernel_h = kernel_from_json(sv);
          else if (sk == "groups") s.groups = sv.get<Index>();
          else if (sk == "conditions_per_group") s.conditions_per_group = sv.get<Index>();
          else if (sk == "total_train") s.total_train = sv.get<Index>();
          else if (sk == "num_test_inputs") s.num_test_inputs = sv.get<Index>();
          else throw InvalidArgument("unknown synthetic option '" + sk + "'");
        }
      } else if (key == "braking") {
        for (const auto& [bk, bv] : v.items()) {
          auto& b = c.braking;
          if (bk == "conditions") b.conditions = bv.get<Index>();
          else if (bk == "runs_per_condition") b.runs_per_condition = bv.get<Index>();
          else if (bk == "noise_sd") b.noise_sd = bv.get<double>();
          else if (bk == "test_speeds") b.test_speeds = bv.get<Index>();
          else throw InvalidArgument("unknown braking option '" + bk + "'");
        }
      } else if (key == "sensor") {
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "bucket_minutes") c.sensor.bucket_minutes = sv.get<double>();
          else if (sk == "keep_fraction") c.sensor.keep_fraction = sv.get<double>();
          else throw InvalidArgument("unknown sensor option '" + sk + "'");
        }
      } else {
        throw InvalidArgument("unknown experiment option '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: ") + e.what());
  }
  return c;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix train_points(const ObservationSet& data) {
  const auto r = std::holds_alternative<GridObservations>(data)
                     ? RaggedObservations::from_grid(std::get<GridObservations>(data))
                     : std::get<RaggedObservations>(data);
  Matrix out(r.total_points(), 2 + input_dims(data));
  Index row = 0;
  for (Index d = 0; d < r.num_conditions(); ++d) {
    const auto& c = r.conditions[static_cast<std::size_t>(d)];
    for (Index i = 0; i < c.y.size(); ++i, ++row) {
      out(row, 0) = static_cast<double>(d);
      out.row(row).segment(1, c.X.cols()) = c.X.row(i);
      out(row, out.cols() - 1) = c.y[i];
    }
  }
  return out;
}

Curve curve_for(const TrainedModel& model, const Matrix& points, Index n) {
  const double lo = points.col(1).minCoeff(), hi = points.col(1).maxCoeff();
  const Index D = model.num_conditions();
  Matrix X(n * D, 1);
  std::vector<Index> ids;
  for (Index d = 0; d < D; ++d)
    for (Index i = 0; i < n; ++i) {
      X(d * n + i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
      ids.push_back(d);
    }
  const auto p = predict_trained(model, X, ids);
  Curve c{model.variant, Matrix(n * D, 4)};
  for (Index k = 0; k < n * D; ++k) {
    c.rows.row(k) << static_cast<double>(ids[static_cast<std::size_t>(k)]), X(k, 0), p.mean[k], p.variance[k];
  }
  return c;
}

RepeatResult run_repeat(const ExperimentConfig& cfg, Index r, const TabularDataset* preloaded) {
  RepeatResult res;
  res.repeat = r;
  res.seed = cfg.base_seed + static_cast<std::uint64_t>(r);
  TabularDataset ds;
  switch (cfg.kind) {
    case ExperimentKind::synthetic_grid: {
      auto spec = cfg.synthetic;
      spec.seed = res.seed;
      ds = gen_synthetic_grid(spec).data;
      break;
    }
    case ExperimentKind::synthetic_missing: {
      auto spec = cfg.synthetic;
      spec.seed = res.seed;
      ds = gen_synthetic_missing(spec).data;
      break;
    }
    case ExperimentKind::servo:
      ds = split_train_test(*preloaded, cfg.train_fraction, res.seed);
      break;
    case ExperimentKind::sensor: {
      auto opt = cfg.sensor;
      opt.mask_seed = res.seed;
      ds = load_sensor_csv(cfg.dataset_path, opt);
      break;
    }
    case ExperimentKind::braking_toy: {
      auto spec = cfg.braking;
      spec.seed = res.seed;
      ds = gen_braking_toy(spec).data;
      break;
    }
  }
  ModelSettings settings = cfg.settings;
  settings.train.seed = res.seed;
  const bool curves = cfg.write_curves && r == 0 && input_dims(ds.train) == 1;
  if (curves) res.train_points = train_points(ds.train);
  for (auto v : cfg.variants) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto model = train_variant(v, ds.train, ds.condition_names, settings);
      const auto p = predict_trained(model, ds.test.X, ds.test.ids);
      res.rmse[v] = rmse(p.mean, ds.test.y);
      if (curves) res.curves.push_back(curve_for(model, res.train_points, cfg.curve_points));
    } catch (const std::exception& e) {
      res.failures[v] = e.what();
    }
    res.seconds[v] = seconds_since(t0);
  }
  if (cfg.kind == ExperimentKind::braking_toy) {
    auto spec = cfg.braking;
    spec.seed = res.seed;
    try {
      const auto a = analyze_braking(settings, spec);
      res.extra["latent_r_squared"] = a.r_squared;
      res.extra["new_condition_rmse"] = {{"lvmogp", a.lvmogp_new_rmse}, {"gp-wo", a.gp_wo_new_rmse}};
    } catch (const std::exception& e) {
      res.extra["analysis_failure"] = e.what();
    }
  }
  return res;
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  ExperimentResult out;
  out.config = config;
  out.rmse_scale = config.kind == ExperimentKind::sensor ? "normalized" : "raw";
  TabularDataset servo;
  if (config.kind == ExperimentKind::servo) servo = load_servo_csv(config.dataset_path);

  out.repeats.resize(static_cast<std::size_t>(config.repeats));
  std::atomic<Index> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (Index r = next++; r < config.repeats; r = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      auto res = run_repeat(config, r, &servo);
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << "[" << to_string(config.kind) << "] repeat " << r << " (" << std::fixed << std::setprecision(1)
             << seconds_since(t0) << " s)";
        for (const auto& [v, e] : res.rmse) *log << " " << to_string(v) << "=" << std::setprecision(4) << e;
        *log << "\n";
        for (const auto& [v, msg] : res.failures) {
          *log << "warning: repeat " << r << " " << to_string(v) << " failed and is excluded: " << msg << "\n";
        }
        log->unsetf(std::ios::floatfield);
      }
      out.repeats[static_cast<std::size_t>(r)] = std::move(res);
    }
  };
  const Index threads = std::min(config.jobs, config.repeats);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (Index t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto v : config.variants) {
    auto& s = out.summary[v];
    for (const auto& r : out.repeats) {
      if (auto it = r.rmse.find(v); it != r.rmse.end()) {
        s.rmse.push_back(it->second);
      } else if (auto f = r.failures.find(v); f != r.failures.end()) {
        s.failures.emplace_back(r.repeat, f->second);
      }
    }
    if (!s.rmse.empty()) {
      const Eigen::Map<const Vector> e(s.rmse.data(), static_cast<Index>(s.rmse.size()));
      s.mean = e.mean();
      s.std = std::sqrt((e.array() - s.mean).square().mean());
    }
  }
  return out;
}

json ExperimentResult::metrics() const {
  json models = json::object();
  for (const auto& [v, s] : summary) {
    json failures = json::array();
    for (const auto& [r, msg] : s.failures) failures.push_back({{"repeat", r}, {"message", msg}});
    models[to_string(v)] = {{"rmse", s.rmse},
                            {"mean", s.rmse.empty() ? json(nullptr) : json(s.mean)},
                            {"std", s.rmse.empty() ? json(nullptr) : json(s.std)},
                            {"successful_repeats", s.rmse.size()},
                            {"failures", failures}};
  }
  json per_repeat = json::array();
  for (const auto& r : repeats) {
    json e = json::object();
    for (const auto& [v, x] : r.rmse) e[to_string(v)] = x;
    json item = {{"repeat", r.repeat}, {"seed", r.seed}, {"rmse", e}};
    if (!r.extra.empty()) item["extra"] = r.extra;
    per_repeat.push_back(std::move(item));
  }
  json j = {{"schema_version", kMetricsSchemaVersion},
            {"experiment", to_string(config.kind)},
            {"rmse_scale", rmse_scale},
            {"repeats", config.repeats},
            {"config", to_json(config)},
            {"models", models},
            {"per_repeat", per_repeat}};
  if (config.kind == ExperimentKind::braking_toy) {
    std::vector<double> r2, lv, wo;
    for (const auto& r : repeats) {
      if (!r.extra.contains("latent_r_squared")) continue;
      r2.push_back(r.extra["latent_r_squared"].get<double>());
      lv.push_back(r.extra["new_condition_rmse"]["lvmogp"].get<double>());
      wo.push_back(r.extra["new_condition_rmse"]["gp-wo"].get<double>());
    }
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? json(nullptr) : json(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
    };
    j["braking_analysis"] = {{"mean_latent_r_squared", mean(r2)},
                             {"mean_new_condition_rmse", {{"lvmogp", mean(lv)}, {"gp-wo", mean(wo)}}}};
  }
  return j;
}

void write_experiment_outputs(const ExperimentResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "metrics.json", std::ios::binary);
    out << result.metrics().dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "boxplot.csv", std::ios::binary);
    out << "model,repeat,rmse\n";
    for (auto v : result.config.variants)
      for (const auto& r : result.repeats)
        if (auto it = r.rmse.find(v); it != r.rmse.end()) {
          out << to_string(v) << "," << r.repeat << "," << csv_number(it->second) << "\n";
        }
  }
  if (result.repeats.empty() || result.repeats.front().curves.empty()) return;
  const auto& first = result.repeats.front();
  const fs::path curves = fs::path(dir) / "curves";
  fs::create_directories(curves);
  {
    std::ofstream out(curves / "train_points.csv", std::ios::binary);
    out << "condition,x,y\n";
    for (Index i = 0; i < first.train_points.rows(); ++i) {
      out << static_cast<Index>(first.train_points(i, 0)) << "," << csv_number(first.train_points(i, 1)) << ","
          << csv_number(first.train_points(i, 2)) << "\n";
    }
  }
  for (const auto& c : first.curves) {
    std::ofstream out(curves / (to_string(c.variant) + ".csv"), std::ios::binary);
    out << "condition,x,mean,variance\n";
    for (Index i = 0; i < c.rows.rows(); ++i) {
      out << static_cast<Index>(c.rows(i, 0)) << "," << csv_number(c.rows(i, 1)) << "," << csv_number(c.rows(i, 2))
          << "," << csv_number(c.rows(i, 3)) << "\n";
    }
  }
}

BrakingAnalysis analyze_braking(const ModelSettings& settings, const BrakingSpec& spec, Index support_runs) {
  if (support_runs < 1 || support_runs > spec.runs_per_condition) {
    throw InvalidArgument("support_runs must be between 1 and runs_per_condition");
  }
  BrakingSpec full = spec;
  full.conditions = spec.conditions + 1;
  const auto b = gen_braking_toy(full);
  const Index D = spec.conditions;
  auto all = std::get<RaggedObservations>(b.data.train);
  const auto held = all.conditions.back();
  all.conditions.pop_back();
  const ObservationSet train = all;

  BrakingAnalysis a;
  const auto lv = train_variant(ModelVariant::lvmogp, train, {}, settings);
  const Matrix& means = lv.lvmogp().latent.means;
  const Matrix centred = means.rowwise() - means.colwise().mean();
  const Eigen::JacobiSVD<Matrix> svd(centred, Eigen::ComputeThinU);
  a.principal_coordinate = svd.matrixU().col(0) * svd.singularValues()[0];
  a.inverse_friction = b.friction.head(D).cwiseInverse();
  const Vector pc = a.principal_coordinate.array() - a.principal_coordinate.mean();
  const Vector inv = a.inverse_friction.array() - a.inverse_friction.mean();
  const double denom = pc.squaredNorm() * inv.squaredNorm();
  a.r_squared = denom > 0.0 ? std::pow(pc.dot(inv), 2) / denom : 0.0;

  // one-shot prediction for the held-out surface on its noiseless test speeds
  const Matrix sX = held.X.topRows(support_runs);
  const Vector sy = held.y.head(support_runs);
  const Index T = full.test_speeds;
  const Matrix tX = b.data.test.X.bottomRows(T);
  const Vector ty = b.data.test.y.tail(T);
  a.lvmogp_new_rmse = rmse(predict_new_condition(lv, sX, sy, tX).mean, ty);

  // GP-WO pools every observation, including the support runs
  auto pooled = all;
  pooled.conditions.push_back({sX, sy});
  const auto wo = train_variant(ModelVariant::gp_wo, ObservationSet(pooled), {}, settings);
  a.gp_wo_new_rmse = rmse(predict_trained(wo, tX, std::vector<Index>(static_cast<std::size_t>(T), D)).mean, ty);
  return a;
}

}  // namespace lvmogp
