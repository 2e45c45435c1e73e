#include "lvmogp/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace lvmogp {

Normalization Normalization::identity(Index columns) {
  return {Vector::Zero(columns), Vector::Ones(columns)};
}

Normalization Normalization::fit(const Matrix& values) {
  const Index C = values.cols();
  Normalization n{Vector::Zero(C), Vector::Ones(C)};
  for (Index c = 0; c < C; ++c) {
    double sum = 0.0, count = 0.0;
    for (Index r = 0; r < values.rows(); ++r) {
      if (std::isnan(values(r, c))) continue;
      sum += values(r, c);
      count += 1.0;
    }
    if (count == 0.0) continue;
    const double mean = sum / count;
    double ss = 0.0;
    for (Index r = 0; r < values.rows(); ++r) {
      if (!std::isnan(values(r, c))) ss += (values(r, c) - mean) * (values(r, c) - mean);
    }
    const double sd = count > 1.0 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    n.mean[c] = mean;
    n.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return n;
}

Matrix sample_kronecker_gp(const Matrix& Kx, const Matrix& Kh, std::mt19937_64& rng) {
  const Matrix Lx = CholeskyFactor(Kx, "K^X").lower();
  const Matrix Lh = CholeskyFactor(Kh, "K^H").lower();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix E(Kx.rows(), Kh.rows());
  for (Index j = 0; j < E.cols(); ++j)
    for (Index i = 0; i < E.rows(); ++i) E(i, j) = normal(rng);
  return Lx * E * Lh.transpose();
}

void SyntheticSpec::validate(bool missing) const {
  if (num_conditions < 1 || latent_dims < 1 || input_dims < 1) {
    throw InvalidArgument("synthetic spec: counts must be at least 1");
  }
  if (!(noise_variance >= 0.0)) throw InvalidArgument("synthetic spec: noise variance must be non-negative");
  if (!(input_high > input_low)) throw InvalidArgument("synthetic spec: empty input range");
  kernel_x.validate();
  kernel_h.validate();
  if (kernel_x.dims() != input_dims || kernel_h.dims() != latent_dims) {
    throw InvalidArgument("synthetic spec: kernel dimensions do not match");
  }
  if (missing) {
    if (groups < 1 || conditions_per_group < 1 || total_train < 1 || num_test_inputs < 1) {
      throw InvalidArgument("synthetic spec: group counts must be at least 1");
    }
    if (conditions_per_group != 4) {
      throw InvalidArgument("synthetic spec: three stick breaks give exactly 4 conditions per group");
    }
    if (groups * conditions_per_group != num_conditions) {
      throw InvalidArgument("synthetic spec: groups x conditions_per_group must equal num_conditions");
    }
  } else if (num_inputs < 2) {
    throw InvalidArgument("synthetic spec: need at least two inputs");
  }
}

namespace {

Matrix uniform_matrix(std::mt19937_64& rng, Index r, Index c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix A(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) A(i, j) = u(rng);
  return A;
}

Matrix normal_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix A(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) A(i, j) = n(rng);
  return A;
}

std::vector<std::string> numbered_names(Index n, const std::string& prefix) {
  std::vector<std::string> names;
  for (Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

nlohmann::json kernel_json(const KernelParams& k) {
  return {{"kind", to_string(k.kind)},
          {"variance", k.variance},
          {"lengthscales", std::vector<double>(k.lengthscales.data(), k.lengthscales.data() + k.dims())}};
}

}  // namespace

SyntheticDataset gen_synthetic_grid(const SyntheticSpec& spec) {
  spec.validate(false);
  std::mt19937_64 rng(spec.seed);
  const Index N = spec.num_inputs;
  const Index D = spec.num_conditions;
  const Index Ntr = N / 2;
  const Matrix X = uniform_matrix(rng, N, spec.input_dims, spec.input_low, spec.input_high);
  const Matrix H = normal_matrix(rng, D, spec.latent_dims);
  const Matrix F = sample_kronecker_gp(kernel_matrix(spec.kernel_x, X, X), kernel_matrix(spec.kernel_h, H, H), rng);
  const double sd = std::sqrt(spec.noise_variance);
  const Matrix noise = normal_matrix(rng, Ntr, D) * sd;

  SyntheticDataset out;
  out.latent = H;
  auto& ds = out.data;
  ds.name = "synthetic-grid";
  ds.train = GridObservations{X.topRows(Ntr), F.topRows(Ntr) + noise};
  const Index Nte = N - Ntr;
  ds.test.X = Matrix(Nte * D, spec.input_dims);
  ds.test.y = Vector(Nte * D);
  for (Index d = 0; d < D; ++d) {
    ds.test.X.middleRows(d * Nte, Nte) = X.bottomRows(Nte);
    ds.test.y.segment(d * Nte, Nte) = F.col(d).tail(Nte);
    for (Index n = 0; n < Nte; ++n) ds.test.ids.push_back(d);
  }
  ds.condition_names = numbered_names(D, "c");
  ds.train_mask = Matrix::Zero(N, D);
  ds.train_mask.topRows(Ntr).setOnes();
  ds.test_mask = Matrix::Ones(N, D) - ds.train_mask;
  ds.output_normalization = Normalization::identity(D);
  ds.metadata = {{"generator", "synthetic-grid"},
                 {"seed", spec.seed},
                 {"num_inputs", N},
                 {"num_conditions", D},
                 {"noise_variance", spec.noise_variance},
                 {"kernel_x", kernel_json(spec.kernel_x)},
                 {"kernel_h", kernel_json(spec.kernel_h)},
                 {"test_targets", "noiseless"}};
  return out;
}

std::vector<double> stick_breaking_weights(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w;
  double rest = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double piece = rest * u(rng);
    w.push_back(piece);
    rest -= piece;
  }
  w.push_back(rest);
  return w;
}

std::vector<Index> allocate_counts(const std::vector<double>& weights, Index total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(sum > 0.0) || total < 0) throw InvalidArgument("allocate_counts: bad weights");
  std::vector<Index> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  Index used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<Index>(std::floor(exact));
    used += counts[i];
    rem.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  // largest remainder first; ties go to the lower index
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++counts[rem[k % rem.size()].second];
  return counts;
}

SyntheticDataset gen_synthetic_missing(const SyntheticSpec& spec) {
  spec.validate(true);
  std::mt19937_64 rng(spec.seed);
  const Index D = spec.num_conditions;
  const Index Q = spec.input_dims;
  const Matrix H = normal_matrix(rng, D, spec.latent_dims);

  const auto shares = allocate_counts(std::vector<double>(static_cast<std::size_t>(spec.groups), 1.0), spec.total_train);
  std::vector<Index> counts;
  nlohmann::json weights_json = nlohmann::json::array();
  for (Index g = 0; g < spec.groups; ++g) {
    const auto w = stick_breaking_weights(rng);
    weights_json.push_back(w);
    const auto c = allocate_counts(w, shares[static_cast<std::size_t>(g)]);
    counts.insert(counts.end(), c.begin(), c.end());
  }

  const Index Ntr = std::accumulate(counts.begin(), counts.end(), Index{0});
  const Index Nte = spec.num_test_inputs;
  const Matrix Xtr = uniform_matrix(rng, Ntr, Q, spec.input_low, spec.input_high);
  const Matrix Xte = uniform_matrix(rng, Nte, Q, spec.input_low, spec.input_high);
  Matrix U(Ntr + Nte, Q);
  U << Xtr, Xte;
  const Matrix F = sample_kronecker_gp(kernel_matrix(spec.kernel_x, U, U), kernel_matrix(spec.kernel_h, H, H), rng);
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.noise_variance));

  SyntheticDataset out;
  out.latent = H;
  auto& ds = out.data;
  ds.name = "synthetic-missing";
  RaggedObservations r;
  Index row = 0;
  for (Index d = 0; d < D; ++d) {
    const Index n = counts[static_cast<std::size_t>(d)];
    ConditionObservations c{Xtr.middleRows(row, n), Vector(n)};
    for (Index i = 0; i < n; ++i) c.y[i] = F(row + i, d) + noise(rng);
    r.conditions.push_back(std::move(c));
    row += n;
  }
  ds.train = std::move(r);
  ds.test.X = Matrix(Nte * D, Q);
  ds.test.y = Vector(Nte * D);
  for (Index d = 0; d < D; ++d) {
    ds.test.X.middleRows(d * Nte, Nte) = Xte;
    ds.test.y.segment(d * Nte, Nte) = F.col(d).tail(Nte);
    for (Index n = 0; n < Nte; ++n) ds.test.ids.push_back(d);
  }
  ds.condition_names = numbered_names(D, "c");
  ds.output_normalization = Normalization::identity(D);
  ds.metadata = {{"generator", "synthetic-missing"},
                 {"seed", spec.seed},
                 {"num_conditions", D},
                 {"groups", spec.groups},
                 {"train_counts", counts},
                 {"stick_weights", weights_json},
                 {"noise_variance", spec.noise_variance},
                 {"kernel_x", kernel_json(spec.kernel_x)},
                 {"kernel_h", kernel_json(spec.kernel_h)},
                 {"test_targets", "noiseless"}};
  return out;
}

double braking_distance(double speed, double friction, double g) {
  if (!(friction > 0.0) || !(g > 0.0)) throw InvalidArgument("braking_distance: friction and g must be positive");
  return speed * speed / (2.0 * friction * g);
}

BrakingDataset gen_braking_toy(const BrakingSpec& spec) {
  if (spec.conditions < 1 || spec.runs_per_condition < 1 || spec.test_speeds < 1) {
    throw InvalidArgument("braking toy: counts must be at least 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> mu(spec.friction_low, spec.friction_high);
  std::uniform_real_distribution<double> speed(spec.speed_low, spec.speed_high);
  std::normal_distribution<double> noise(0.0, spec.noise_sd);

  BrakingDataset out;
  out.friction = Vector(spec.conditions);
  RaggedObservations r;
  for (Index d = 0; d < spec.conditions; ++d) {
    out.friction[d] = mu(rng);
    ConditionObservations c{Matrix(spec.runs_per_condition, 1), Vector(spec.runs_per_condition)};
    for (Index i = 0; i < spec.runs_per_condition; ++i) {
      c.X(i, 0) = speed(rng);
      c.y[i] = braking_distance(c.X(i, 0), out.friction[d]) + noise(rng);
    }
    r.conditions.push_back(std::move(c));
  }
  auto& ds = out.data;
  ds.name = "braking-toy";
  ds.train = std::move(r);
  const Index T = spec.test_speeds;
  ds.test.X = Matrix(T * spec.conditions, 1);
  ds.test.y = Vector(T * spec.conditions);
  for (Index d = 0; d < spec.conditions; ++d)
    for (Index t = 0; t < T; ++t) {
      const double v = T == 1 ? spec.speed_low
                              : spec.speed_low + (spec.speed_high - spec.speed_low) * static_cast<double>(t) / static_cast<double>(T - 1);
      ds.test.X(d * T + t, 0) = v;
      ds.test.y[d * T + t] = braking_distance(v, out.friction[d]);
      ds.test.ids.push_back(d);
    }
  ds.condition_names = numbered_names(spec.conditions, "surface");
  ds.output_normalization = Normalization::identity(spec.conditions);
  ds.metadata = {{"generator", "braking-toy"},
                 {"seed", spec.seed},
                 {"g", kGravity},
                 {"noise_sd", spec.noise_sd},
                 {"friction", std::vector<double>(out.friction.data(), out.friction.data() + out.friction.size())}};
  return out;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string t = s.substr(a, b - a);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return t;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line = line.substr(3);
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = fields;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(path + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       n);
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(n);
  }
  if (t.header.empty()) throw ParseError(path + ": missing header row", 1);
  return t;
}

namespace {

std::size_t column(const CsvTable& t, const std::string& name, const std::string& path) {
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (lower(t.header[i]) == name) return i;
  }
  throw ParseError(path + ":1: missing column '" + name + "'", 1);
}

double parse_number(const std::string& s, const std::string& path, long line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(path + ":" + std::to_string(line) + ": not a number: '" + s + "'", line);
}

// days since 1970-01-01 for a proleptic Gregorian date
long days_from_civil(long y, long m, long d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const long yoe = y - era * 400;
  const long doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const long doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

double parse_timestamp(const std::string& s, const std::string& path, long line) {
  int Y, M, D, h = 0, mi = 0;
  double sec = 0.0;
  char sep = 0;
  const int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &Y, &M, &D, &sep, &h, &mi, &sec);
  if (got >= 3 && (got == 3 || (got >= 6 && (sep == ' ' || sep == 'T')))) {
    if (M >= 1 && M <= 12 && D >= 1 && D <= 31 && h >= 0 && h < 24 && mi >= 0 && mi < 60) {
      return static_cast<double>(days_from_civil(Y, M, D)) * 86400.0 + h * 3600.0 + mi * 60.0 + sec;
    }
  }
  // plain numbers are taken as seconds
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(path + ":" + std::to_string(line) + ": bad timestamp '" + s + "'", line);
}

Index level(const std::string& s, const std::string& path, long line) {
  if (s.size() == 1) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    if (c >= 'A' && c <= 'E') return c - 'A';
  }
  throw ParseError(path + ":" + std::to_string(line) + ": unknown level '" + s + "' (expected A-E)", line);
}

}  // namespace

TabularDataset load_servo_csv(const std::string& path) {
  const auto t = read_csv(path);
  const auto cm = column(t, "motor", path), cs = column(t, "screw", path);
  const auto cp = column(t, "pgain", path), cv = column(t, "vgain", path), cy = column(t, "class", path);
  RaggedObservations r;
  r.conditions.assign(25, {Matrix(0, 2), Vector(0)});
  std::vector<std::vector<std::array<double, 3>>> rows(25);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const long ln = t.lines[i];
    const Index id = level(f[cm], path, ln) * 5 + level(f[cs], path, ln);
    rows[static_cast<std::size_t>(id)].push_back({parse_number(f[cp], path, ln), parse_number(f[cv], path, ln),
                                                  parse_number(f[cy], path, ln)});
  }
  if (t.rows.empty()) throw ParseError(path + ": no data rows", 2);
  for (std::size_t d = 0; d < 25; ++d) {
    const auto n = static_cast<Index>(rows[d].size());
    auto& c = r.conditions[d];
    c.X = Matrix(n, 2);
    c.y = Vector(n);
    for (Index i = 0; i < n; ++i) {
      c.X(i, 0) = rows[d][static_cast<std::size_t>(i)][0];
      c.X(i, 1) = rows[d][static_cast<std::size_t>(i)][1];
      c.y[i] = rows[d][static_cast<std::size_t>(i)][2];
    }
  }
  TabularDataset ds;
  ds.name = "servo";
  ds.train = std::move(r);
  ds.test = {Matrix(0, 2), Vector(0), {}};
  for (char m = 'A'; m <= 'E'; ++m)
    for (char s = 'A'; s <= 'E'; ++s) ds.condition_names.push_back(std::string{m, '-', s});
  ds.output_normalization = Normalization::identity(25);
  ds.metadata = {{"source", path}, {"rows", t.rows.size()}};
  return ds;
}

TabularDataset load_sensor_csv(const std::string& path, const SensorOptions& options) {
  if (!(options.bucket_minutes > 0.0)) throw InvalidArgument("sensor: bucket width must be positive");
  if (!(options.keep_fraction > 0.0 && options.keep_fraction <= 1.0)) {
    throw InvalidArgument("sensor: keep fraction must be in (0, 1]");
  }
  const auto t = read_csv(path);
  std::size_t ct = 0;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const auto h = lower(t.header[i]);
    if (h == "timestamp" || h == "time" || h == "date") {
      ct = i;
      break;
    }
  }
  std::vector<std::size_t> channels;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i != ct) channels.push_back(i);
  }
  if (channels.empty()) throw ParseError(path + ":1: no sensor channels", 1);
  if (t.rows.empty()) throw ParseError(path + ": no data rows", 2);

  std::vector<double> times;
  for (std::size_t i = 0; i < t.rows.size(); ++i) times.push_back(parse_timestamp(t.rows[i][ct], path, t.lines[i]));
  const double t0 = *std::min_element(times.begin(), times.end());
  const double width = options.bucket_minutes * 60.0;
  std::vector<Index> bucket(times.size());
  Index B = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    bucket[i] = static_cast<Index>(std::floor((times[i] - t0) / width));
    B = std::max(B, bucket[i] + 1);
  }
  const auto D = static_cast<Index>(channels.size());
  Matrix sum = Matrix::Zero(B, D), count = Matrix::Zero(B, D);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (Index d = 0; d < D; ++d) {
      const auto& field = t.rows[i][channels[static_cast<std::size_t>(d)]];
      if (field.empty() || lower(field) == "nan" || lower(field) == "na") continue;
      sum(bucket[i], d) += parse_number(field, path, t.lines[i]);
      count(bucket[i], d) += 1.0;
    }
  }
  Matrix raw(B, D);
  for (Index b = 0; b < B; ++b)
    for (Index d = 0; d < D; ++d) raw(b, d) = count(b, d) > 0 ? sum(b, d) / count(b, d) : std::nan("");

  TabularDataset ds;
  ds.name = "sensor";
  ds.output_normalization = Normalization::fit(raw);
  std::vector<std::pair<Index, Index>> available;
  for (Index b = 0; b < B; ++b)
    for (Index d = 0; d < D; ++d)
      if (!std::isnan(raw(b, d))) available.emplace_back(b, d);
  if (available.empty()) throw ParseError(path + ": no sensor readings", 2);
  std::mt19937_64 rng(options.mask_seed);
  std::shuffle(available.begin(), available.end(), rng);
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(options.keep_fraction * static_cast<double>(available.size()))));

  ds.train_mask = Matrix::Zero(B, D);
  ds.test_mask = Matrix::Zero(B, D);
  for (std::size_t k = 0; k < available.size(); ++k) {
    (k < keep ? ds.train_mask : ds.test_mask)(available[k].first, available[k].second) = 1.0;
  }
  RaggedObservations r;
  std::vector<double> tx, ty;
  std::vector<Index> tid;
  for (Index d = 0; d < D; ++d) {
    std::vector<Index> idx;
    for (Index b = 0; b < B; ++b)
      if (ds.train_mask(b, d) == 1.0) idx.push_back(b);
    ConditionObservations c{Matrix(static_cast<Index>(idx.size()), 1), Vector(static_cast<Index>(idx.size()))};
    for (std::size_t i = 0; i < idx.size(); ++i) {
      c.X(static_cast<Index>(i), 0) = static_cast<double>(idx[i]);
      c.y[static_cast<Index>(i)] = ds.output_normalization.apply(raw(idx[i], d), d);
    }
    r.conditions.push_back(std::move(c));
    for (Index b = 0; b < B; ++b) {
      if (ds.test_mask(b, d) != 1.0) continue;
      tx.push_back(static_cast<double>(b));
      ty.push_back(ds.output_normalization.apply(raw(b, d), d));
      tid.push_back(d);
    }
  }
  ds.train = std::move(r);
  ds.test.X = Eigen::Map<Matrix>(tx.data(), static_cast<Index>(tx.size()), 1);
  ds.test.y = Eigen::Map<Vector>(ty.data(), static_cast<Index>(ty.size()));
  ds.test.ids = tid;
  for (auto c : channels) ds.condition_names.push_back(t.header[c]);
  ds.metadata = {{"source", path},
                 {"bucket_minutes", options.bucket_minutes},
                 {"buckets", B},
                 {"available_entries", available.size()},
                 {"kept_entries", keep},
                 {"keep_fraction", options.keep_fraction},
                 {"mask_seed", options.mask_seed},
                 {"normalization", {{"mean", std::vector<double>(ds.output_normalization.mean.data(), ds.output_normalization.mean.data() + D)},
                                    {"scale", std::vector<double>(ds.output_normalization.scale.data(), ds.output_normalization.scale.data() + D)}}}};
  return ds;
}

TabularDataset load_generic_csv(const std::string& path) {
  const auto t = read_csv(path);
  const auto cc = column(t, "condition", path), cy = column(t, "y", path);
  std::vector<std::size_t> inputs;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i != cc && i != cy) inputs.push_back(i);
  }
  if (inputs.empty()) throw ParseError(path + ":1: no input columns", 1);
  if (t.rows.empty()) throw ParseError(path + ": no data rows", 2);
  std::map<std::string, Index> ids;
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<double>>> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    auto it = ids.find(f[cc]);
    if (it == ids.end()) {
      it = ids.emplace(f[cc], static_cast<Index>(names.size())).first;
      names.push_back(f[cc]);
      rows.emplace_back();
    }
    std::vector<double> v;
    for (auto c : inputs) v.push_back(parse_number(f[c], path, t.lines[i]));
    v.push_back(parse_number(f[cy], path, t.lines[i]));
    rows[static_cast<std::size_t>(it->second)].push_back(std::move(v));
  }
  const auto Q = static_cast<Index>(inputs.size());
  RaggedObservations r;
  for (const auto& cond : rows) {
    ConditionObservations c{Matrix(static_cast<Index>(cond.size()), Q), Vector(static_cast<Index>(cond.size()))};
    for (std::size_t i = 0; i < cond.size(); ++i) {
      for (Index q = 0; q < Q; ++q) c.X(static_cast<Index>(i), q) = cond[i][static_cast<std::size_t>(q)];
      c.y[static_cast<Index>(i)] = cond[i].back();
    }
    r.conditions.push_back(std::move(c));
  }
  TabularDataset ds;
  ds.name = "generic";
  ds.train = std::move(r);
  ds.test = {Matrix(0, Q), Vector(0), {}};
  ds.condition_names = names;
  ds.output_normalization = Normalization::identity(static_cast<Index>(names.size()));
  ds.metadata = {{"source", path}, {"rows", t.rows.size()}};
  return ds;
}

TabularDataset split_train_test(const TabularDataset& all, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must be in (0, 1)");
  const RaggedObservations r = std::holds_alternative<GridObservations>(all.train)
                                   ? RaggedObservations::from_grid(std::get<GridObservations>(all.train))
                                   : std::get<RaggedObservations>(all.train);
  const Index Q = input_dims(all.train);
  std::vector<std::pair<Index, Index>> points;  // (condition, row)
  for (Index d = 0; d < r.num_conditions(); ++d)
    for (Index i = 0; i < r.conditions[static_cast<std::size_t>(d)].y.size(); ++i) points.emplace_back(d, i);
  std::mt19937_64 rng(seed);
  std::shuffle(points.begin(), points.end(), rng);
  const auto ntrain = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(points.size())));
  std::vector<std::vector<Index>> keep(static_cast<std::size_t>(r.num_conditions()));
  for (std::size_t k = 0; k < ntrain; ++k) keep[static_cast<std::size_t>(points[k].first)].push_back(points[k].second);

  TabularDataset out = all;
  RaggedObservations tr;
  for (Index d = 0; d < r.num_conditions(); ++d) {
    auto& rows = keep[static_cast<std::size_t>(d)];
    std::sort(rows.begin(), rows.end());
    const auto& c = r.conditions[static_cast<std::size_t>(d)];
    ConditionObservations o{Matrix(static_cast<Index>(rows.size()), Q), Vector(static_cast<Index>(rows.size()))};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      o.X.row(static_cast<Index>(i)) = c.X.row(rows[i]);
      o.y[static_cast<Index>(i)] = c.y[rows[i]];
    }
    tr.conditions.push_back(std::move(o));
  }
  std::vector<std::pair<Index, Index>> test(points.begin() + static_cast<std::ptrdiff_t>(ntrain), points.end());
  std::sort(test.begin(), test.end());
  const Index old = all.test.size();
  out.test.X = Matrix(old + static_cast<Index>(test.size()), Q);
  out.test.y = Vector(out.test.X.rows());
  if (old > 0) {
    out.test.X.topRows(old) = all.test.X;
    out.test.y.head(old) = all.test.y;
  }
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& c = r.conditions[static_cast<std::size_t>(test[k].first)];
    out.test.X.row(old + static_cast<Index>(k)) = c.X.row(test[k].second);
    out.test.y[old + static_cast<Index>(k)] = c.y[test[k].second];
    out.test.ids.push_back(test[k].first);
  }
  out.train = std::move(tr);
  out.metadata["split_seed"] = seed;
  out.metadata["train_fraction"] = train_fraction;
  return out;
}

void write_metadata_sidecar(const TabularDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << data.metadata.dump(2) << "\n";
}

QueryTable load_query_csv(const std::string& path) {
  const auto t = read_csv(path);
  const auto cc = column(t, "condition", path);
  std::vector<std::size_t> inputs;
  QueryTable q;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i == cc || lower(t.header[i]) == "y") continue;
    inputs.push_back(i);
    q.input_names.push_back(t.header[i]);
  }
  if (inputs.empty()) throw ParseError(path + ":1: no input columns", 1);
  q.X = Matrix(static_cast<Index>(t.rows.size()), static_cast<Index>(inputs.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      q.X(static_cast<Index>(i), static_cast<Index>(k)) = parse_number(t.rows[i][inputs[k]], path, t.lines[i]);
    }
    q.conditions.push_back(t.rows[i][cc]);
  }
  return q;
}

namespace {

std::string csv_field(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_rows(std::ostream& out, const Matrix& X, const Vector& y, const std::vector<Index>& ids,
                const std::vector<std::string>& names) {
  for (Index i = 0; i < y.size(); ++i) {
    for (Index q = 0; q < X.cols(); ++q) out << csv_field(X(i, q)) << ',';
    out << names.at(static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])) << ',' << csv_field(y[i]) << '\n';
  }
}

}  // namespace

void write_generic_csv(const TabularDataset& data, const std::string& train_path, const std::string& test_path) {
  const RaggedObservations r = std::holds_alternative<GridObservations>(data.train)
                                   ? RaggedObservations::from_grid(std::get<GridObservations>(data.train))
                                   : std::get<RaggedObservations>(data.train);
  const Index Q = input_dims(data.train);
  auto header = [&](std::ostream& out) {
    for (Index q = 0; q < Q; ++q) out << 'x' << q << ',';
    out << "condition,y\n";
  };
  std::ofstream tr(train_path, std::ios::binary);
  if (!tr) throw InvalidArgument("cannot write '" + train_path + "'");
  header(tr);
  for (Index d = 0; d < r.num_conditions(); ++d) {
    const auto& c = r.conditions[static_cast<std::size_t>(d)];
    write_rows(tr, c.X, c.y, std::vector<Index>(static_cast<std::size_t>(c.y.size()), d), data.condition_names);
  }
  if (test_path.empty()) return;
  std::ofstream te(test_path, std::ios::binary);
  if (!te) throw InvalidArgument("cannot write '" + test_path + "'");
  header(te);
  write_rows(te, data.test.X, data.test.y, data.test.ids, data.condition_names);
}

}  // namespace lvmogp
