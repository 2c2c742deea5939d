#include <doctest.h>

#include <cmath>
#include <sstream>

#include "devmf/data.hpp"
#include "devmf/error.hpp"
#include "devmf/eval.hpp"

using namespace devmf;
using namespace devmf::eval;

namespace {

TrainConfig fast_config(ModelKind kind, std::size_t epochs) {
  TrainConfig cfg;
  cfg.model_kind = kind;
  cfg.hp.rank_mean = 2;
  cfg.hp.rank_dev = 2;
  cfg.hp.learning_rate = 0.1;
  cfg.hp.epochs = epochs;
  return cfg;
}

}  // namespace

TEST_CASE("rmse and mse") {
  const std::vector<double> t{1.0, 2.0};
  CHECK(rmse(t, t) == 0.0);
  CHECK(rmse(std::vector<double>{2.0, 3.0}, t) == 1.0);
  CHECK(rmse(std::vector<double>{3.0, 4.0}, std::vector<double>{0.0, 0.0}) ==
        doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(mse(std::vector<double>{3.0, 4.0}, std::vector<double>{0.0, 0.0}) == 12.5);
  CHECK_THROWS_AS(rmse(std::vector<double>{1.0}, t), ShapeError);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

TEST_CASE("evaluate_model") {
  data::SyntheticSpec spec;
  const auto syn = data::synthesize(spec);
  auto cfg = fast_config(ModelKind::biased_mf, 200);
  cfg.hp.sigma_u2 = cfg.hp.sigma_v2 = 1e6;
  const auto trained = train(syn.observed, cfg);

  SUBCASE("training subset of a converged noiseless fit") {
    const auto sub = data::subsample(syn.observed, 0.3, 1);
    const auto m = evaluate_model(trained.mean, sub);
    CHECK(m.rmse < 1e-2);
    CHECK(m.n == sub.size());
    CHECK(m.cold_start_count == 0);
    CHECK(m.rmse * m.rmse == doctest::Approx(m.mse).epsilon(1e-12));
  }

  SUBCASE("cold-start tuples use the default") {
    ObservationSet train_obs{{3, 3}, {make_entry(0, 0, 5.0), make_entry(1, 1, 1.0)}};
    const MeanModel mean(train_obs.mode_sizes, 1, 3.0);
    const auto policy = ColdStartPolicy::from_training(train_obs, data::ColdStartKind::rating);
    ObservationSet cold{{5, 5}, {make_entry(2, 0, 3.0), make_entry(0, 2, 3.0), make_entry(4, 4, 3.0)}};
    const auto m = evaluate_model(mean, cold, &policy);
    CHECK(m.rmse == 0.0);
    CHECK(m.cold_start_count == 3);

    ObservationSet mixed{{3, 3}, {make_entry(0, 1, 4.0), make_entry(2, 2, 3.0)}};
    const auto mm = evaluate_model(mean, mixed, &policy);
    CHECK(mm.cold_start_count == 1);
    CHECK(mm.mse == doctest::Approx(0.5));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(evaluate_model(trained.mean, ObservationSet{{20, 20}, {}}), ContractError);
    ObservationSet outside{{30, 20}, {make_entry(25, 0, 1.0)}};
    CHECK_THROWS_AS(evaluate_model(trained.mean, outside), ContractError);
    const auto policy = ColdStartPolicy::from_training(syn.observed, 0.0);
    CHECK_NOTHROW(evaluate_model(trained.mean, outside, &policy));
  }
}

TEST_CASE("spearman and variance recovery") {
  const std::vector<double> a{0.3, 1.2, 0.1, 5.0, 2.2};
  CHECK(spearman(a, a).correlation == doctest::Approx(1.0));
  std::vector<double> rev;
  for (double x : a) rev.push_back(-x);
  CHECK(spearman(a, rev).correlation == doctest::Approx(-1.0));
  const std::vector<double> flat(5, 2.0);
  const auto d = spearman(a, flat);
  CHECK(d.degenerate);
  CHECK(d.correlation == 0.0);
  // Monotone transform leaves ranks unchanged.
  std::vector<double> cubed;
  for (double x : a) cubed.push_back(x * x * x + 7.0);
  CHECK(spearman(a, cubed).correlation == doctest::Approx(1.0));
  // Ties get average ranks: ranks (1.5, 1.5, 3) against (1, 2, 3).
  CHECK(spearman(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}).correlation ==
        doctest::Approx(0.8660254037844386));
  CHECK_THROWS_AS(spearman(std::vector<double>{1.0}, std::vector<double>{1.0}), ShapeError);

  data::SyntheticSpec spec;
  spec.noise = data::NoiseKind::lowrank_hetero;
  const auto syn = data::synthesize(spec);
  const auto cells = syn.clean_cells();
  CHECK(variance_recovery(syn.truth_dev, cells, syn.variance).correlation == doctest::Approx(1.0));
  const DeviationModel constant(spec.mode_sizes, 2, 0.5);
  CHECK(variance_recovery(constant, cells, syn.variance).degenerate);
}

TEST_CASE("sweep_train_fraction") {
  data::SyntheticSpec spec;
  spec.mode_sizes = {40, 40};
  spec.observed_fraction = 0.6;
  spec.noise = data::NoiseKind::homoscedastic;
  spec.noise_level = 0.05;
  const auto syn = data::synthesize(spec);
  const auto parts = data::split(syn.observed, {0.2, 0.0, 1});
  const std::vector<SweepMethod> methods{{"biased-mf", fast_config(ModelKind::biased_mf, 40)},
                                         {"dmf", fast_config(ModelKind::dmf, 40)}};

  SUBCASE("fraction 1 reproduces a plain run") {
    SweepOptions opt;
    opt.fractions = {1.0};
    const auto res = sweep_train_fraction(parts.train, parts.test, methods, opt);
    REQUIRE(res.cells.size() == 2);
    const auto policy = ColdStartPolicy::from_training(parts.train, opt.cold_start);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto direct = evaluate_model(train(parts.train, methods[k].config).mean, parts.test, &policy);
      CHECK(res.cells[k].metrics.mse == direct.mse);
      CHECK(res.rows[k].mse == direct.mse);
    }
  }

  SUBCASE("more data helps and reruns agree") {
    SweepOptions opt;
    opt.fractions = {0.05, 0.5};
    opt.repeats = 3;
    opt.seed = 11;
    const auto res = sweep_train_fraction(parts.train, parts.test, methods, opt);
    REQUIRE(res.rows.size() == 4);
    CHECK(res.rows[0].mse >= res.rows[2].mse);
    CHECK(res.rows[1].mse >= res.rows[3].mse);
    CHECK(res.cells.size() == 12);

    std::ostringstream a, b;
    write_sweep_csv(a, res);
    write_sweep_csv(b, sweep_train_fraction(parts.train, parts.test, methods, opt));
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("method,fraction,repeat,rmse,mse,n,cold_start_count\n", 0) == 0);
  }

  SUBCASE("invalid options") {
    SweepOptions opt;
    opt.fractions = {0.5, 0.2};
    CHECK_THROWS_AS(sweep_train_fraction(parts.train, parts.test, methods, opt), ConfigError);
    opt.fractions = {0.0};
    CHECK_THROWS_AS(sweep_train_fraction(parts.train, parts.test, methods, opt), ConfigError);
    opt.fractions = {1e-6};
    CHECK_THROWS_AS(sweep_train_fraction(parts.train, parts.test, methods, opt), ConfigError);
    opt.fractions = {0.5};
    opt.repeats = 0;
    CHECK_THROWS_AS(sweep_train_fraction(parts.train, parts.test, methods, opt), ConfigError);
  }
}

TEST_CASE("epochs_to_converge") {
  TrainReport rep;
  for (double v : {1.0, 0.6, 0.505, 0.5, 0.51}) rep.epochs.push_back({rep.epochs.size() + 1, v, v, 0, 0, 0});
  CHECK(epochs_to_converge(rep, 0.02) == std::size_t{3});
  CHECK(epochs_to_converge(rep, 0.0) == std::size_t{4});
  TrainReport none;
  none.epochs.push_back({1, 1.0, std::nullopt, 0, 0, 0});
  CHECK_FALSE(epochs_to_converge(none).has_value());
}
