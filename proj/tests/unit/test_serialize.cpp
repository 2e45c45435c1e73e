#include <doctest.h>

#include <cstring>
#include <limits>

#include "lvmogp/errors.hpp"
#include "lvmogp/experiments.hpp"
#include "lvmogp/serialize.hpp"
#include "test_util.hpp"

using namespace lvmogp;
using namespace lvmogp::test;
using nlohmann::json;

namespace {

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("matrices survive a text round trip bit for bit") {
  Rng rng(11);
  Matrix A = randn(rng, 4, 3, 1e3);
  A(0, 0) = std::numeric_limits<double>::denorm_min();
  A(1, 1) = -0.1;
  A(2, 2) = 1.0 / 3.0;
  A(3, 0) = std::numeric_limits<double>::max();
  const Matrix B = matrix_from_json(json::parse(matrix_to_json(A).dump()));
  CHECK(bit_equal(A, B));

  CHECK(matrix_from_json(matrix_to_json(Matrix(0, 3))).size() == 0);
  const Vector v = randn(rng, 5, 1).col(0);
  CHECK(bit_equal(v, vector_from_json(json::parse(vector_to_json(v).dump()))));
}

TEST_CASE("malformed matrices are parse errors") {
  CHECK_THROWS_AS(matrix_from_json(json::parse("[[1, 2], [3]]")), ParseError);
  CHECK_THROWS_AS(matrix_from_json(json::parse("[[1, \"a\"]]")), ParseError);
  CHECK_THROWS_AS(matrix_from_json(json::parse("{\"a\": 1}")), ParseError);
}

TEST_CASE("lvmogp model round trip keeps the bound exactly") {
  Rng rng(5);
  for (bool pcn : {false, true}) {
    const auto m = random_model(rng, 4, 2, 1, 3, 4, pcn);
    const auto j = to_json(m);
    const auto back = lvmogp_from_json(json::parse(j.dump()));
    CHECK(to_json(back).dump() == j.dump());
    const auto data = random_ragged(rng, 4, 1, 5);
    CHECK(evaluate_bound(back, data).total() == evaluate_bound(m, data).total());
  }
}

TEST_CASE("lvmogp model parsing rejects missing or bad fields") {
  Rng rng(6);
  const auto j = to_json(random_model(rng, 3, 1, 1, 2, 3));
  for (const auto& [key, _] : j.items()) {
    json k = j;
    k.erase(key);
    CHECK_THROWS_AS(lvmogp_from_json(k), ParseError);
  }
  json bad = j;
  bad["noise_variance"] = json::array({-1.0});
  CHECK_THROWS(lvmogp_from_json(bad));
}

TEST_CASE("baseline models round trip") {
  Rng rng(7);
  const GridObservations g = random_grid(rng, 6, 3, 1);
  for (auto kind : {BaselineKind::gp_ind, BaselineKind::lmc, BaselineKind::gp_oh, BaselineKind::gp_wo}) {
    BaselineConfig cfg;
    cfg.max_iters = 5;
    const auto m = fit_baseline(kind, g, cfg);
    const auto j = to_json(m);
    const auto back = baseline_from_json(json::parse(j.dump()));
    CHECK(to_json(back).dump() == j.dump());
    CHECK(baseline_objective(back) == baseline_objective(m));
  }
}

TEST_CASE("training config round trip and unknown keys") {
  TrainConfig c;
  c.optimizer = OptimizerKind::lbfgs;
  c.max_iters = 17;
  c.learning_rate = 0.3;
  c.tolerance = 1e-4;
  c.tolerance_window = 3;
  c.warmup_iters = 2;
  c.seed = 99;
  c.init = InitStrategy::pca;
  c.include_kl_qh = false;
  c.per_condition_noise = true;
  c.analytic_qu = false;
  c.whiten = false;
  c.frozen = {ParamGroup::kernel_x, ParamGroup::inducing_h};
  const auto j = to_json(c);
  const auto back = train_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.frozen == c.frozen);
  CHECK_FALSE(back.whiten);
  CHECK_FALSE(back.analytic_qu);

  // partial configs override only what they name
  const auto partial = train_config_from_json(json{{"max_iters", 5}}, c);
  CHECK(partial.max_iters == 5);
  CHECK(partial.seed == 99);

  CHECK_THROWS_AS(train_config_from_json(json{{"max_iter", 5}}), InvalidArgument);
  CHECK_THROWS_AS(train_config_from_json(json{{"optimizer", "sgd"}}), InvalidArgument);
  CHECK_THROWS_AS(train_config_from_json(json{{"frozen", {"weights"}}}), InvalidArgument);
}

TEST_CASE("trained model files are versioned and reproducible") {
  Rng rng(8);
  const auto data = random_ragged(rng, 3, 1, 6);
  ModelSettings s;
  s.num_latent_inducing = 4;
  s.num_input_inducing = 3;
  s.train.max_iters = 10;
  const auto a = train_variant(ModelVariant::lvmogp, data, {"a", "b", "c"}, s);
  const auto b = train_variant(ModelVariant::lvmogp, data, {"a", "b", "c"}, s);
  const std::string text = serialize_model(a);
  CHECK(text == serialize_model(b));
  const auto back = trained_model_from_json(json::parse(text));
  CHECK(serialize_model(back) == text);

  json j = json::parse(text);
  j["version"] = kModelFormatVersion + 1;
  CHECK_THROWS_AS(trained_model_from_json(j), ParseError);
  j = json::parse(text);
  j["format"] = "something-else";
  CHECK_THROWS_AS(trained_model_from_json(j), ParseError);
  j = json::parse(text);
  j["condition_names"] = {"a"};
  CHECK_THROWS_AS(trained_model_from_json(j), ParseError);
}
