#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "devmf/data.hpp"
#include "devmf/error.hpp"
#include "devmf/optimizer.hpp"

using namespace devmf;

namespace {

data::SyntheticData small_synthetic(std::vector<std::size_t> sizes, data::NoiseKind noise, unsigned seed,
                                    double observed = 0.8) {
  data::SyntheticSpec spec;
  spec.mode_sizes = std::move(sizes);
  spec.rank_mean = 2;
  spec.rank_dev = 2;
  spec.observed_fraction = observed;
  spec.noise = noise;
  spec.seed = seed;
  return data::synthesize(spec);
}

std::vector<double> flatten(const MeanModel& m) {
  std::vector<double> out;
  for (const Matrix& f : m.factors) out.insert(out.end(), f.values().begin(), f.values().end());
  for (const auto& b : m.biases) out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<std::vector<double>> mean_trajectory(const ObservationSet& obs, const TrainConfig& cfg) {
  std::vector<std::vector<double>> steps;
  TrainHooks hooks;
  hooks.on_step = [&](const MeanModel& m, const DeviationModel&, std::size_t) { steps.push_back(flatten(m)); };
  train(obs, cfg, nullptr, hooks);
  return steps;
}

double max_abs_diff(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double worst = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s)
    for (std::size_t k = 0; k < a[s].size(); ++k) worst = std::max(worst, std::abs(a[s][k] - b[s][k]));
  return worst;
}

}  // namespace

TEST_CASE("adagrad_step") {
  SUBCASE("zero gradient") {
    AdaGradState s(1, 0.1);
    s.accumulators[0] = 2.5;
    CHECK(adagrad_step(s, 0, 0.0) == 0.0);
    CHECK(s.accumulators[0] == 2.5);
  }
  SUBCASE("fresh accumulator") {
    AdaGradState s(1, 0.1, 1e-8);
    CHECK(adagrad_step(s, 0, 2.0) == doctest::Approx(-0.1).epsilon(1e-8));
    CHECK(s.accumulators[0] == 4.0);
  }
  SUBCASE("two unit gradients") {
    AdaGradState s(1, 1.0, 0.0);
    CHECK(adagrad_step(s, 0, 1.0) == -1.0);
    CHECK(adagrad_step(s, 0, 1.0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
  }
  SUBCASE("non-finite gradient aborts the step") {
    AdaGradState s(2, 0.1);
    CHECK_THROWS_AS(adagrad_step(s, 1, std::numeric_limits<double>::quiet_NaN()), NumericError);
    CHECK_THROWS_AS(adagrad_step(s, 1, std::numeric_limits<double>::infinity()), NumericError);
    CHECK(s.accumulators[1] == 0.0);
  }
  SUBCASE("accumulators never decrease") {
    AdaGradState s(1, 0.3);
    double last = 0.0;
    for (int k = -20; k <= 20; ++k) {
      const double u = adagrad_step(s, 0, 0.37 * k);
      CHECK(std::isfinite(u));
      CHECK(s.accumulators[0] >= last);
      last = s.accumulators[0];
    }
  }
}

TEST_CASE("project_nonneg") {
  CHECK(project_nonneg(std::vector<double>{-0.5, 0.2}) == std::vector<double>{0.0, 0.2});
  const std::vector<double> pos{0.0, 1.0, 3.5};
  CHECK(project_nonneg(pos) == pos);
  const std::vector<double> mixed{-1.0, 2.0, -0.0, 4.0, -1e-300};
  CHECK(project_nonneg(project_nonneg(mixed)) == project_nonneg(mixed));
}

TEST_CASE("initialize") {
  Hyperparams hp;
  hp.rank_mean = 4;
  hp.rank_dev = 3;
  const std::vector<std::size_t> sizes{6, 9};
  const auto a = initialize(sizes, hp, 42, 2.5);
  const auto b = initialize(sizes, hp, 42, 2.5);
  const auto c = initialize(sizes, hp, 43, 2.5);
  for (std::size_t m = 0; m < 2; ++m) {
    CHECK(a.first.factors[m] == b.first.factors[m]);
    CHECK(a.second.factors[m] == b.second.factors[m]);
    for (double x : a.first.factors[m].values()) CHECK(std::abs(x) <= 0.25);
    for (double x : a.second.factors[m].values()) {
      CHECK(x >= 0.0);
      CHECK(x <= 0.1);
    }
    for (double x : a.first.biases[m]) CHECK(x == 0.0);
  }
  CHECK(a.first.mu == 2.5);
  CHECK_FALSE(a.first.factors[0] == c.first.factors[0]);
}

TEST_CASE("train with zero epochs returns the initialization") {
  const auto syn = small_synthetic({8, 8}, data::NoiseKind::none, 1);
  TrainConfig cfg;
  cfg.hp.epochs = 0;
  cfg.hp.seed = 5;
  const auto r = train(syn.observed, cfg);
  const auto init = initialize(syn.observed.mode_sizes, cfg.hp, 5, syn.observed.mean_value());
  CHECK(r.report.epochs.empty());
  CHECK(r.mean.factors[0] == init.first.factors[0]);
  CHECK(r.mean.factors[1] == init.first.factors[1]);
  CHECK(r.dev.factors[0] == init.second.factors[0]);
  CHECK(r.mean.mu == init.first.mu);
}

TEST_CASE("noiseless low-rank data is fitted") {
  const auto syn = small_synthetic({20, 20}, data::NoiseKind::none, 0);
  for (ModelKind kind : {ModelKind::biased_mf, ModelKind::dmf}) {
    TrainConfig cfg;
    cfg.model_kind = kind;
    cfg.hp.rank_mean = 2;
    cfg.hp.rank_dev = 2;
    cfg.hp.learning_rate = 0.1;
    cfg.hp.sigma_u2 = cfg.hp.sigma_v2 = 1e6;
    cfg.hp.epochs = 200;
    const auto r = train(syn.observed, cfg);
    CHECK(r.report.epochs.size() == 200);
    CHECK(r.report.epochs.back().train_rmse < 1e-2);
    CHECK(rmse_on(r.mean, syn.observed) == r.report.epochs.back().train_rmse);
  }
}

TEST_CASE("frozen-deviation DMF follows Biased MF") {
  const auto syn = small_synthetic({12, 10}, data::NoiseKind::homoscedastic, 3);
  TrainConfig dmf;
  dmf.model_kind = ModelKind::dmf;
  dmf.hp.rank_mean = 3;
  dmf.hp.lambda_p = dmf.hp.lambda_q = 0.0;
  dmf.hp.delta_sigma2 = 1.0;
  dmf.hp.dev_learning_rate = 0.0;
  dmf.hp.sigma_u2 = 0.5;
  dmf.hp.sigma_v2 = 2.0;
  dmf.hp.epochs = 3;
  dmf.hp.seed = 17;
  dmf.hp.learning_rate = 0.05;
  dmf.zero_init_deviation = true;

  SUBCASE("plain SGD at half the rate") {
    dmf.schedule = Schedule::constant;
    TrainConfig bmf = dmf;
    bmf.model_kind = ModelKind::biased_mf;
    bmf.hp.learning_rate = dmf.hp.learning_rate / 2.0;
    const auto a = mean_trajectory(syn.observed, dmf);
    const auto b = mean_trajectory(syn.observed, bmf);
    REQUIRE(a.size() == 3 * syn.observed.size());
    REQUIRE(a.size() == b.size());
    CHECK(max_abs_diff(a, b) <= 1e-12);
  }
  SUBCASE("AdaGrad at the same rate with a quadrupled epsilon") {
    TrainConfig bmf = dmf;
    bmf.model_kind = ModelKind::biased_mf;
    bmf.adagrad_epsilon = 4.0 * dmf.adagrad_epsilon;
    const auto a = mean_trajectory(syn.observed, dmf);
    const auto b = mean_trajectory(syn.observed, bmf);
    REQUIRE(a.size() == b.size());
    CHECK(max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("deviation factors stay non-negative after every step") {
  for (auto sizes : {std::vector<std::size_t>{15, 12}, std::vector<std::size_t>{6, 5, 4}}) {
    const auto syn = small_synthetic(sizes, data::NoiseKind::lowrank_hetero, 4);
    TrainConfig cfg;
    cfg.model_kind = sizes.size() == 3 ? ModelKind::dtf : ModelKind::dmf;
    cfg.hp.rank_mean = 3;
    cfg.hp.rank_dev = 3;
    cfg.hp.lambda_p = cfg.hp.lambda_q = cfg.hp.lambda_s = 0.5;
    cfg.hp.learning_rate = 0.2;
    cfg.hp.epochs = 10;
    std::size_t violations = 0, steps = 0;
    TrainHooks hooks;
    hooks.on_step = [&](const MeanModel&, const DeviationModel& dev, std::size_t) {
      ++steps;
      if (dev.min_entry() < 0.0) ++violations;
    };
    const auto r = train(syn.observed, cfg, nullptr, hooks);
    CHECK(steps == 10 * syn.observed.size());
    CHECK(violations == 0);
    CHECK(r.report.epochs.back().dev_sparsity > 0.0);
  }
}

TEST_CASE("training is reproducible") {
  const auto syn = small_synthetic({15, 15}, data::NoiseKind::lowrank_hetero, 6);
  TrainConfig cfg;
  cfg.hp.epochs = 15;
  cfg.hp.seed = 9;
  cfg.val_fraction = 0.2;
  const auto a = train(syn.observed, cfg);
  const auto b = train(syn.observed, cfg);
  REQUIRE(a.report.epochs.size() == b.report.epochs.size());
  for (std::size_t k = 0; k < a.report.epochs.size(); ++k) {
    CHECK(a.report.epochs[k].train_rmse == b.report.epochs[k].train_rmse);
    CHECK(a.report.epochs[k].val_rmse == b.report.epochs[k].val_rmse);
  }
  std::ostringstream ca, cb;
  write_report_csv(ca, a.report, false);
  write_report_csv(cb, b.report, false);
  CHECK(ca.str() == cb.str());

  cfg.hp.seed = 10;
  const auto c = train(syn.observed, cfg);
  CHECK(c.report.epochs[0].train_rmse != a.report.epochs[0].train_rmse);
}

TEST_CASE("early stopping returns the best validation epoch") {
  const auto syn = small_synthetic({20, 20}, data::NoiseKind::lowrank_hetero, 7, 0.5);
  const auto parts = data::split(syn.observed, {});
  TrainConfig cfg;
  cfg.hp.epochs = 80;
  cfg.hp.learning_rate = 0.1;
  cfg.early_stop_patience = 3;
  const auto r = train(parts.train, cfg, &parts.val);
  REQUIRE(r.report.best_epoch >= 1);
  REQUIRE(r.report.best_epoch <= r.report.epochs.size());
  const double recorded = *r.report.epochs[r.report.best_epoch - 1].val_rmse;
  CHECK(rmse_on(r.mean, parts.val) == recorded);
  for (const auto& rec : r.report.epochs) CHECK(*rec.val_rmse >= recorded);
  if (r.report.epochs.size() < 80) CHECK(r.report.epochs.size() == r.report.best_epoch + 3);
}

TEST_CASE("configuration and divergence errors") {
  const auto syn = small_synthetic({10, 10}, data::NoiseKind::homoscedastic, 8);
  TrainConfig cfg;
  cfg.model_kind = ModelKind::dtf;
  CHECK_THROWS_AS(train(syn.observed, cfg), ConfigError);

  cfg.model_kind = ModelKind::dmf;
  cfg.val_fraction = 1.0;
  CHECK_THROWS_AS(train(syn.observed, cfg), ConfigError);

  CHECK_THROWS_AS(train(ObservationSet{{3, 3}, {}}, TrainConfig{}), ConfigError);

  TrainConfig wild;
  wild.model_kind = ModelKind::biased_mf;
  wild.schedule = Schedule::constant;
  wild.hp.learning_rate = 50.0;
  wild.hp.epochs = 50;
  try {
    train(syn.observed, wild);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() >= 1);
  }
}

TEST_CASE("report CSV") {
  TrainReport rep;
  rep.epochs.push_back({1, 0.5, 0.25, 3.0, 0.5, 0.125});
  rep.epochs.push_back({2, 0.5, std::nullopt, 3.0, 0.5, 0.125});
  std::ostringstream with, without;
  write_report_csv(with, rep, true);
  write_report_csv(without, rep, false);
  CHECK(with.str().rfind("epoch,train_rmse,val_rmse,objective,dev_sparsity,seconds\n", 0) == 0);
  CHECK(without.str().find("2,5.0000000000000000e-01,,3.0000000000000000e+00,5.0000000000000000e-01,\n") !=
        std::string::npos);
  CHECK(with.str().find("1.2500000000000000e-01") != std::string::npos);
}
