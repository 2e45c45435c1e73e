#include "lvmogp/serialize.hpp"

#include <cmath>

namespace lvmogp {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw ParseError("model file: " + what, 0); }

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    bad(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

json matrix_to_json(const Matrix& A) {
  json rows = json::array();
  for (Index i = 0; i < A.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < A.cols(); ++j) r.push_back(A(i, j));
    rows.push_back(std::move(r));
  }
  return {{"rows", A.rows()}, {"cols", A.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json& j) {
  const auto r = get<Index>(j, "rows"), c = get<Index>(j, "cols");
  const auto& data = field(j, "data");
  if (r < 0 || c < 0 || !data.is_array() || static_cast<Index>(data.size()) != r) bad("matrix shape mismatch");
  Matrix A(r, c);
  for (Index i = 0; i < r; ++i) {
    const auto& row = data[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != c) bad("matrix row length mismatch");
    for (Index k = 0; k < c; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number()) bad("matrix entry is not a number");
      A(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return A;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  if (!j.is_array()) bad("expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad("expected an array of numbers");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

json to_json(const KernelParams& k) {
  return {{"kind", to_string(k.kind)}, {"variance", k.variance}, {"lengthscales", vector_to_json(k.lengthscales)}};
}

KernelParams kernel_from_json(const json& j) {
  KernelParams k;
  try {
    k.kind = kernel_kind_from_string(get<std::string>(j, "kind"));
  } catch (const InvalidArgument& e) {
    bad(e.what());
  }
  k.variance = get<double>(j, "variance");
  k.lengthscales = vector_from_json(field(j, "lengthscales"));
  try {
    k.validate();
  } catch (const InvalidArgument& e) {
    bad(e.what());
  }
  return k;
}

json to_json(const LvmogpModel& m) {
  return {{"kernel_x", to_json(m.kernel_x)},
          {"kernel_h", to_json(m.kernel_h)},
          {"noise_variance", vector_to_json(m.noise_variance)},
          {"latent_means", matrix_to_json(m.latent.means)},
          {"latent_variances", matrix_to_json(m.latent.variances)},
          {"Z_H", matrix_to_json(m.inducing.Z_H)},
          {"Z_X", matrix_to_json(m.inducing.Z_X)},
          {"qu_mean", matrix_to_json(m.q_u.mean)},
          {"qu_covH_chol", matrix_to_json(m.q_u.covH_chol)},
          {"qu_covX_chol", matrix_to_json(m.q_u.covX_chol)}};
}

LvmogpModel lvmogp_from_json(const json& j) {
  LvmogpModel m;
  m.kernel_x = kernel_from_json(field(j, "kernel_x"));
  m.kernel_h = kernel_from_json(field(j, "kernel_h"));
  m.noise_variance = vector_from_json(field(j, "noise_variance"));
  m.latent.means = matrix_from_json(field(j, "latent_means"));
  m.latent.variances = matrix_from_json(field(j, "latent_variances"));
  m.inducing.Z_H = matrix_from_json(field(j, "Z_H"));
  m.inducing.Z_X = matrix_from_json(field(j, "Z_X"));
  m.q_u.mean = matrix_from_json(field(j, "qu_mean"));
  m.q_u.covH_chol = matrix_from_json(field(j, "qu_covH_chol"));
  m.q_u.covX_chol = matrix_from_json(field(j, "qu_covX_chol"));
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    bad(e.what());
  }
  return m;
}

json to_json(const BaselineModel& m) {
  return {{"kind", to_string(m.kind)},
          {"num_conditions", m.num_conditions},
          {"kernel_x", to_json(m.kernel_x)},
          {"noise_variance", m.noise_variance},
          {"coreg_chol", matrix_to_json(m.coreg_chol)},
          {"onehot_lengthscales", vector_to_json(m.onehot_lengthscales)},
          {"X", matrix_to_json(m.X)},
          {"y", vector_to_json(m.y)},
          {"ids", m.ids},
          {"grid_rows", m.grid_rows},
          {"Z", matrix_to_json(m.Z)},
          {"sparse", m.sparse}};
}

BaselineModel baseline_from_json(const json& j) {
  BaselineModel m;
  try {
    m.kind = baseline_kind_from_string(get<std::string>(j, "kind"));
  } catch (const InvalidArgument& e) {
    bad(e.what());
  }
  m.num_conditions = get<Index>(j, "num_conditions");
  m.kernel_x = kernel_from_json(field(j, "kernel_x"));
  m.noise_variance = get<double>(j, "noise_variance");
  m.coreg_chol = matrix_from_json(field(j, "coreg_chol"));
  m.onehot_lengthscales = vector_from_json(field(j, "onehot_lengthscales"));
  m.X = matrix_from_json(field(j, "X"));
  m.y = vector_from_json(field(j, "y"));
  m.ids = get<std::vector<Index>>(j, "ids");
  m.grid_rows = get<Index>(j, "grid_rows");
  m.Z = matrix_from_json(field(j, "Z"));
  m.sparse = get<bool>(j, "sparse");
  // grid models keep the N shared inputs once
  const bool rows_ok = m.grid_rows > 0 ? m.X.rows() == m.grid_rows && m.y.size() % m.grid_rows == 0
                                       : m.X.rows() == m.y.size();
  if (m.num_conditions < 1 || !(m.noise_variance > 0.0) || !rows_ok ||
      static_cast<Index>(m.ids.size()) != m.y.size()) {
    bad("inconsistent baseline model");
  }
  for (auto id : m.ids) {
    if (id < 0 || id >= m.num_conditions) bad("condition id out of range");
  }
  return m;
}

json to_json(const TrainConfig& c) {
  std::vector<std::string> frozen;
  for (auto g : c.frozen) frozen.push_back(to_string(g));
  return {{"optimizer", to_string(c.optimizer)},
          {"max_iters", c.max_iters},
          {"learning_rate", c.learning_rate},
          {"tolerance", c.tolerance},
          {"tolerance_window", c.tolerance_window},
          {"warmup_iters", c.warmup_iters},
          {"seed", c.seed},
          {"init", to_string(c.init)},
          {"include_kl_qh", c.include_kl_qh},
          {"per_condition_noise", c.per_condition_noise},
          {"analytic_qu", c.analytic_qu},
          {"whiten", c.whiten},
          {"frozen", frozen}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw InvalidArgument("training config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "optimizer") c.optimizer = optimizer_from_string(v.get<std::string>());
      else if (key == "max_iters") c.max_iters = v.get<Index>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "tolerance") c.tolerance = v.get<double>();
      else if (key == "tolerance_window") c.tolerance_window = v.get<Index>();
      else if (key == "warmup_iters") c.warmup_iters = v.get<Index>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "init") c.init = init_strategy_from_string(v.get<std::string>());
      else if (key == "include_kl_qh") c.include_kl_qh = v.get<bool>();
      else if (key == "per_condition_noise") c.per_condition_noise = v.get<bool>();
      else if (key == "analytic_qu") c.analytic_qu = v.get<bool>();
      else if (key == "whiten") c.whiten = v.get<bool>();
      else if (key == "frozen") {
        c.frozen.clear();
        for (const auto& g : v) c.frozen.insert(param_group_from_string(g.get<std::string>()));
      } else {
        throw InvalidArgument("unknown training option '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace lvmogp
