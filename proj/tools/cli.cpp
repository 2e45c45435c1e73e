#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvmogp/datasets.hpp"
#include "lvmogp/errors.hpp"
#include "lvmogp/experiments.hpp"
#include "lvmogp/serialize.hpp"

namespace lvmogp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// flags shared by train and experiment; unset ones leave the defaults alone
struct ModelFlags {
  std::optional<Index> qh, mh, mx, iters;
  std::optional<std::uint64_t> seed;
  std::string config;

  void add_to(CLI::App& app) {
    app.add_option("--qh", qh, "latent dimensionality Q_H")->check(CLI::PositiveNumber);
    app.add_option("--mh", mh, "latent inducing points M_H")->check(CLI::PositiveNumber);
    app.add_option("--mx", mx, "input inducing points M_X")->check(CLI::PositiveNumber);
    app.add_option("--iters", iters, "optimizer iterations")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "random seed");
    app.add_option("--config", config, "JSON file; its keys override the flags")->check(CLI::ExistingFile);
  }

  void apply(ModelSettings& s) const {
    if (qh) s.latent_dims = *qh;
    if (mh) s.num_latent_inducing = *mh;
    if (mx) s.num_input_inducing = *mx;
    if (iters) {
      s.train.max_iters = *iters;
      s.baseline.max_iters = *iters;
    }
    if (seed) s.train.seed = *seed;
  }
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  out << text;
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

TabularDataset load_dataset(const std::string& path, const std::string& schema, std::uint64_t seed) {
  if (schema == "generic") return load_generic_csv(path);
  if (schema == "servo") return load_servo_csv(path);
  SensorOptions o;
  o.mask_seed = seed;
  return load_sensor_csv(path, o);
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string name;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_generate(const GenerateArgs& a) {
  TabularDataset data;
  json extra = json::object();
  if (a.name == "synthetic-grid" || a.name == "synthetic-missing") {
    SyntheticSpec spec;
    spec.seed = a.seed;
    const auto s = a.name == "synthetic-grid" ? gen_synthetic_grid(spec) : gen_synthetic_missing(spec);
    data = s.data;
    extra["latent"] = matrix_to_json(s.latent);
  } else {
    BrakingSpec spec;
    spec.seed = a.seed;
    const auto b = gen_braking_toy(spec);
    data = b.data;
  }
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  write_generic_csv(data, (dir / "train.csv").string(), (dir / "test.csv").string());
  json meta = data.metadata;
  meta["name"] = a.name;
  for (auto& [k, v] : extra.items()) meta[k] = v;
  write_text(dir / "metadata.json", meta.dump(2) + "\n");
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string schema = "generic";
  std::string model = "lvmogp";
  std::string out;
  ModelFlags flags;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  ModelSettings s;
  a.flags.apply(s);
  if (!a.flags.config.empty()) s = model_settings_from_json(read_json_file(a.flags.config), s);
  const auto variant = model_variant_from_string(a.model);
  const auto data = load_dataset(a.dataset, a.schema, s.train.seed);

  const auto t0 = std::chrono::steady_clock::now();
  const auto trained = train_variant(variant, data.train, data.condition_names, s);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  save_model(trained, (dir / "model.json").string());
  std::ostringstream trace;
  trace << "iteration,bound\n";
  for (std::size_t i = 0; i < trained.trace.size(); ++i) trace << i << "," << number(trained.trace[i]) << "\n";
  write_text(dir / "trace.csv", trace.str());

  const double initial = trained.trace.empty() ? 0.0 : trained.trace.front();
  const double final_bound = trained.trace.empty() ? 0.0 : trained.trace.back();
  const json meta = {{"dataset", a.dataset},
                     {"schema", a.schema},
                     {"variant", to_string(variant)},
                     {"seed", s.train.seed},
                     {"settings", to_json(s)},
                     {"dataset_metadata", data.metadata},
                     {"initial_bound", initial},
                     {"final_bound", final_bound},
                     {"iterations", trained.trace.empty() ? 0 : trained.trace.size() - 1},
                     {"seconds", seconds}};
  write_text(dir / "run.json", meta.dump(2) + "\n");
  out << "final bound " << number(final_bound) << " (initial " << number(initial) << ")\n";
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string query;
  std::string out;
  std::string new_condition;
  bool with_noise = false;
};

void cmd_predict(const PredictArgs& a, std::ostream& stdout_stream) {
  const auto model = load_model(a.model);
  const auto q = load_query_csv(a.query);
  const Index n = q.X.rows();
  if (n > 0 && q.X.cols() != (model.variant == ModelVariant::lvmogp ? model.lvmogp().input_dims()
                                                                      : std::get<BaselineModel>(model.model).kernel_x.dims())) {
    throw InvalidArgument("query has " + std::to_string(q.X.cols()) + " input columns, the model expects a different number");
  }
  std::map<std::string, Index> known;
  for (std::size_t d = 0; d < model.condition_names.size(); ++d) known[model.condition_names[d]] = static_cast<Index>(d);

  std::optional<TabularDataset> support;
  if (!a.new_condition.empty()) support = load_generic_csv(a.new_condition);

  Vector mean = Vector::Zero(n), var = Vector::Zero(n);
  // known conditions in one batch, unknown ones grouped by name
  std::vector<Index> rows_known, ids_known;
  std::map<std::string, std::vector<Index>> rows_new;
  for (Index i = 0; i < n; ++i) {
    const auto& c = q.conditions[static_cast<std::size_t>(i)];
    if (auto it = known.find(c); it != known.end()) {
      rows_known.push_back(i);
      ids_known.push_back(it->second);
    } else {
      rows_new[c].push_back(i);
    }
  }
  if (!rows_known.empty()) {
    Matrix X(static_cast<Index>(rows_known.size()), q.X.cols());
    for (std::size_t k = 0; k < rows_known.size(); ++k) X.row(static_cast<Index>(k)) = q.X.row(rows_known[k]);
    const auto p = predict_trained(model, X, ids_known, a.with_noise);
    for (std::size_t k = 0; k < rows_known.size(); ++k) {
      mean[rows_known[k]] = p.mean[static_cast<Index>(k)];
      var[rows_known[k]] = p.variance[static_cast<Index>(k)];
    }
  }
  for (const auto& [name, rows] : rows_new) {
    if (!support) throw InvalidArgument("unknown condition '" + name + "' (pass --new-condition with support data)");
    if (model.variant != ModelVariant::lvmogp) throw InvalidArgument("--new-condition needs an lvmogp model");
    const auto& names = support->condition_names;
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("no support points for condition '" + name + "'");
    const auto& sc = std::get<RaggedObservations>(support->train).conditions[static_cast<std::size_t>(it - names.begin())];
    Matrix X(static_cast<Index>(rows.size()), q.X.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) X.row(static_cast<Index>(k)) = q.X.row(rows[k]);
    const auto p = predict_new_condition(model, sc.X, sc.y, X, a.with_noise);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      mean[rows[k]] = p.mean[static_cast<Index>(k)];
      var[rows[k]] = p.variance[static_cast<Index>(k)];
    }
  }

  std::ostringstream csv;
  for (const auto& h : q.input_names) csv << h << ",";
  csv << "condition_id,mean,variance\n";
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < q.X.cols(); ++c) csv << number(q.X(i, c)) << ",";
    csv << q.conditions[static_cast<std::size_t>(i)] << "," << number(mean[i]) << "," << number(var[i]) << "\n";
  }
  if (a.out.empty()) {
    stdout_stream << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
}

// ---- experiment ------------------------------------------------------------

struct ExperimentArgs {
  std::string name;
  std::string dataset;
  std::string out;
  std::optional<Index> repeats, jobs;
  std::vector<std::string> models;
  ModelFlags flags;
};

void cmd_experiment(const ExperimentArgs& a, std::ostream& err) {
  auto c = ExperimentConfig::defaults(experiment_kind_from_string(a.name));
  a.flags.apply(c.settings);
  if (a.flags.seed) c.base_seed = *a.flags.seed;
  if (a.repeats) c.repeats = *a.repeats;
  if (a.jobs) c.jobs = *a.jobs;
  if (!a.dataset.empty()) c.dataset_path = a.dataset;
  if (!a.models.empty()) {
    c.variants.clear();
    for (const auto& m : a.models) c.variants.push_back(model_variant_from_string(m));
  }
  if (!a.flags.config.empty()) c = experiment_config_from_json(read_json_file(a.flags.config), c);
  c.validate();
  const auto result = run_experiment(c, &err);
  write_experiment_outputs(result, a.out);
  for (const auto& [v, s] : result.summary) {
    err << to_string(v) << ": ";
    if (s.rmse.empty()) {
      err << "no successful repeats\n";
    } else {
      err << "rmse " << s.mean << " +- " << s.std << " over " << s.rmse.size() << " repeats\n";
    }
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent variable multiple output Gaussian processes"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic dataset as CSV");
  g->add_option("name", gen.name, "dataset")
      ->required()
      ->check(CLI::IsMember({"synthetic-grid", "synthetic-missing", "braking-toy"}));
  g->add_option("--seed", gen.seed, "random seed");
  g->add_option("--out", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "fit one model to a dataset");
  t->add_option("--dataset", tr.dataset, "training CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--schema", tr.schema, "CSV layout")->check(CLI::IsMember({"generic", "servo", "sensor"}));
  t->add_option("--model", tr.model, "lvmogp, gp-ind, lmc, gp-oh or gp-wo");
  t->add_option("--out", tr.out, "output directory")->required();
  tr.flags.add_to(*t);

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "predict with a saved model");
  p->add_option("--model", pr.model, "model file written by train")->required()->check(CLI::ExistingFile);
  p->add_option("--query", pr.query, "CSV with input columns and a condition column")
      ->required()
      ->check(CLI::ExistingFile);
  p->add_option("--out", pr.out, "predictions CSV (standard output if omitted)");
  p->add_option("--new-condition", pr.new_condition, "support CSV (generic schema) for unseen conditions")
      ->check(CLI::ExistingFile);
  p->add_flag("--with-noise", pr.with_noise, "add the noise variance to the predictive variance");

  ExperimentArgs ex;
  auto* e = app.add_subcommand("experiment", "run a benchmark experiment");
  e->add_option("name", ex.name, "experiment")
      ->required()
      ->check(CLI::IsMember({"synthetic-grid", "synthetic-missing", "servo", "sensor", "braking-toy"}));
  e->add_option("--dataset", ex.dataset, "CSV for servo / sensor")->check(CLI::ExistingFile);
  e->add_option("--out", ex.out, "output directory")->required();
  e->add_option("--repeats", ex.repeats, "number of repeats")->check(CLI::PositiveNumber);
  e->add_option("--jobs", ex.jobs, "worker threads")->check(CLI::PositiveNumber);
  e->add_option("--models", ex.models, "model variants to run");
  ex.flags.add_to(*e);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitConfig;
  }

  try {
    if (g->parsed()) cmd_generate(gen);
    if (t->parsed()) cmd_train(tr, out);
    if (p->parsed()) cmd_predict(pr, out);
    if (e->parsed()) cmd_experiment(ex, err);
  } catch (const NumericalError& ex_) {
    err << "numerical failure: " << ex_.what() << "\n";
    return kExitNumerical;
  } catch (const ParseError& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}

}  // namespace lvmogp::cli
