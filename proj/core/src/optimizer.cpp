#include "devmf/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <tuple>

#include "devmf/error.hpp"
#include "devmf/serialize.hpp"
#include "kernels.hpp"

namespace devmf {

namespace {

constexpr double kDivergenceBound = 1e8;

/// Offsets of every per-row parameter block inside a group's flat accumulator vector.
struct ParamLayout {
  std::array<std::size_t, kMaxModes> factor_offset{};
  std::array<std::size_t, kMaxModes> bias_offset{};
  std::size_t total = 0;

  static ParamLayout for_factors(const std::vector<Matrix>& factors, bool with_biases) {
    ParamLayout l;
    for (std::size_t m = 0; m < factors.size(); ++m) {
      l.factor_offset[m] = l.total;
      l.total += factors[m].size();
    }
    if (with_biases)
      for (std::size_t m = 0; m < factors.size(); ++m) {
        l.bias_offset[m] = l.total;
        l.total += factors[m].rows();
      }
    return l;
  }
};

/// Applies one scheduled update per coordinate of a parameter group.
class Stepper {
 public:
  Stepper(Schedule schedule, std::size_t params, double rate, double epsilon)
      : schedule_(schedule), rate_(rate), state_(schedule == Schedule::adagrad ? params : 0, rate, epsilon) {}

  bool active() const noexcept { return rate_ != 0.0; }

  double update(std::size_t param, double grad) {
    if (schedule_ == Schedule::adagrad) return adagrad_step(state_, param, grad);
    if (!std::isfinite(grad)) throw NumericError("non-finite gradient");
    return -rate_ * grad;
  }

 private:
  Schedule schedule_;
  double rate_;
  AdaGradState state_;
};

void apply(double& param, double delta, std::size_t epoch) {
  param += delta;
  if (!(std::abs(param) <= kDivergenceBound))
    throw DivergenceError("parameter magnitude exceeded 1e8", epoch);
}

std::pair<ObservationSet, ObservationSet> holdout(const ObservationSet& obs, double fraction,
                                                  unsigned seed) {
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(obs.size())));
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed) ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_val(obs.size(), false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;

  ObservationSet train{obs.mode_sizes, {}}, val{obs.mode_sizes, {}};
  for (std::size_t k = 0; k < obs.size(); ++k)
    (is_val[k] ? val : train).entries.push_back(obs.entries[k]);
  return {std::move(train), std::move(val)};
}

}  // namespace

double adagrad_step(AdaGradState& state, std::size_t param, double grad) {
  if (!std::isfinite(grad)) throw NumericError("non-finite gradient for parameter " + std::to_string(param));
  double& acc = state.accumulators.at(param);
  acc += grad * grad;
  if (grad == 0.0) return 0.0;
  return -state.base_rate * grad / std::sqrt(acc + state.epsilon);
}

std::vector<double> project_nonneg(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  project_nonneg_inplace(out);
  return out;
}

void project_nonneg_inplace(std::span<double> values) noexcept {
  for (double& x : values)
    if (!(x >= 0.0)) x = 0.0;
}

void TrainConfig::validate() const {
  hp.validate();
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in [0, 1)");
  if (!(adagrad_epsilon >= 0.0)) throw ConfigError("adagrad_epsilon must be non-negative");
}

std::pair<MeanModel, DeviationModel> initialize(std::span<const std::size_t> mode_sizes,
                                                const Hyperparams& hp, unsigned seed,
                                                double mu) {
  if (mode_sizes.size() < 2 || mode_sizes.size() > kMaxModes)
    throw ShapeError("models have 2 or 3 modes");
  for (std::size_t n : mode_sizes)
    if (n == 0) throw ShapeError("mode sizes must be positive");
  if (hp.rank_mean == 0 || hp.rank_dev == 0) throw ConfigError("ranks must be positive");

  std::mt19937_64 rng(seed);
  MeanModel mean(mode_sizes, hp.rank_mean, mu);
  const double half_width = 0.5 / std::sqrt(static_cast<double>(hp.rank_mean));
  std::uniform_real_distribution<double> mean_draw(-half_width, half_width);
  for (Matrix& f : mean.factors)
    for (double& x : f.values()) x = mean_draw(rng);

  DeviationModel dev(mode_sizes, hp.rank_dev, hp.delta_sigma2);
  std::uniform_real_distribution<double> dev_draw(0.0, 0.1);
  for (Matrix& f : dev.factors)
    for (double& x : f.values()) x = dev_draw(rng);
  return {std::move(mean), std::move(dev)};
}

double rmse_on(const MeanModel& mean, const ObservationSet& obs) {
  if (obs.empty()) return 0.0;
  double sse = 0.0;
  for (const Entry& e : obs.entries) {
    const double r = e.value - predict_mean(mean, std::span<const Index>(e.index.data(), obs.modes()));
    sse += r * r;
  }
  return std::sqrt(sse / static_cast<double>(obs.size()));
}

TrainResult train(const ObservationSet& train_input, const TrainConfig& cfg,
                  const ObservationSet* val_input, const TrainHooks& hooks) {
  cfg.validate();
  train_input.validate();
  if (train_input.empty()) throw ConfigError("training set is empty");
  if (train_input.modes() != mode_count(cfg.model_kind))
    throw ConfigError("model kind expects " + std::to_string(mode_count(cfg.model_kind)) +
                      " modes, data has " + std::to_string(train_input.modes()));

  const Hyperparams& hp = cfg.hp;
  ObservationSet carved_train, carved_val;
  const ObservationSet* train_set = &train_input;
  const ObservationSet* val_set = val_input;
  if (val_set == nullptr && cfg.val_fraction > 0.0) {
    std::tie(carved_train, carved_val) = holdout(train_input, cfg.val_fraction, hp.seed);
    if (carved_train.empty()) throw ConfigError("validation holdout leaves no training data");
    train_set = &carved_train;
    if (!carved_val.empty()) val_set = &carved_val;
  }
  if (val_set != nullptr) {
    if (val_set->mode_sizes != train_set->mode_sizes)
      throw ShapeError("validation set sizes differ from the training set");
    if (val_set->empty()) val_set = nullptr;
  }

  const bool deviation = learns_deviation(cfg.model_kind);
  auto [mean, dev] = initialize(train_set->mode_sizes, hp, hp.seed, train_set->mean_value());
  if (!deviation) {
    // The squared-error baselines are the deviation model frozen at zero factors and unit floor.
    dev = DeviationModel(train_set->mode_sizes, hp.rank_dev, 1.0);
  } else if (cfg.zero_init_deviation) {
    for (Matrix& f : dev.factors) std::fill(f.values().begin(), f.values().end(), 0.0);
  }

  TrainResult result{mean, dev, {}};
  if (hp.epochs == 0) return result;

  const PriorWeights weights(*train_set, hp.prior_scaling);
  const std::size_t modes = train_set->modes();
  const ParamLayout mean_layout = ParamLayout::for_factors(mean.factors, true);
  const ParamLayout dev_layout = ParamLayout::for_factors(dev.factors, false);
  Stepper mean_step(cfg.schedule, mean_layout.total, hp.learning_rate, cfg.adagrad_epsilon);
  Stepper dev_step(cfg.schedule, dev_layout.total, deviation ? hp.dev_rate() : 0.0,
                   cfg.adagrad_epsilon);

  GradientBundle grad;
  grad.resize(modes, mean.rank(), dev.rank());
  std::vector<std::size_t> order(train_set->size());
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(hp.seed) ^ static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }

    const auto started = std::chrono::steady_clock::now();
    for (std::size_t n : order) {
      const Entry& obs = train_set->entries[n];
      if (deviation)
        gradient_at(mean, dev, hp, obs, weights, grad);
      else
        squared_error_gradient_at(mean, hp, obs, weights, grad);

      for (std::size_t m = 0; m < modes; ++m) {
        const std::size_t row = obs.index[m];
        std::span<double> f = mean.factors[m].row(row);
        const std::size_t base = mean_layout.factor_offset[m] + row * f.size();
        for (std::size_t k = 0; k < f.size(); ++k)
          apply(f[k], mean_step.update(base + k, grad.mean_rows[m][k]), epoch);
        if (hp.use_biases)
          apply(mean.biases[m][row], mean_step.update(mean_layout.bias_offset[m] + row, grad.biases[m]),
                epoch);
      }
      if (deviation && dev_step.active()) {
        for (std::size_t m = 0; m < modes; ++m) {
          const std::size_t row = obs.index[m];
          std::span<double> g = dev.factors[m].row(row);
          const std::size_t base = dev_layout.factor_offset[m] + row * g.size();
          for (std::size_t k = 0; k < g.size(); ++k)
            apply(g[k], dev_step.update(base + k, grad.dev_rows[m][k]), epoch);
          project_nonneg_inplace(g);
        }
      }
      if (hooks.on_step) hooks.on_step(mean, dev, step);
      ++step;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.seconds = seconds;
    rec.train_rmse = rmse_on(mean, *train_set);
    if (val_set != nullptr) rec.val_rmse = rmse_on(mean, *val_set);
    rec.objective = deviation ? objective(mean, dev, hp, *train_set)
                              : squared_error_objective(mean, hp, *train_set);
    rec.dev_sparsity = dev.sparsity();
    if (!std::isfinite(rec.objective) || !std::isfinite(rec.train_rmse))
      throw DivergenceError("objective is not finite", epoch);
    result.report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(mean, dev, rec);

    if (val_set != nullptr && cfg.early_stop_patience > 0) {
      if (*rec.val_rmse < best_val) {
        best_val = *rec.val_rmse;
        result.mean = mean;
        result.dev = dev;
        result.report.best_epoch = epoch;
      } else if (epoch - result.report.best_epoch >= cfg.early_stop_patience) {
        break;
      }
    }
  }

  if (val_set == nullptr || cfg.early_stop_patience == 0) {
    result.mean = std::move(mean);
    result.dev = std::move(dev);
    result.report.best_epoch = result.report.epochs.size();
  }
  return result;
}

void write_report_csv(std::ostream& out, const TrainReport& report, bool include_timing) {
  out << "epoch,train_rmse,val_rmse,objective,dev_sparsity,seconds\n";
  for (const EpochRecord& r : report.epochs) {
    out << r.epoch << ',' << format_exact(r.train_rmse) << ',';
    if (r.val_rmse) out << format_exact(*r.val_rmse);
    out << ',' << format_exact(r.objective) << ',' << format_exact(r.dev_sparsity) << ',';
    if (include_timing) out << format_exact(r.seconds);
    out << '\n';
  }
}

}  // namespace devmf
