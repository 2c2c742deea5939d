#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "devmf/model.hpp"
#include "devmf/observation.hpp"

namespace devmf {

/// Per-coordinate AdaGrad accumulators for one parameter group.
struct AdaGradState {
  std::vector<double> accumulators;
  double epsilon = 1e-8;
  double base_rate = 0.05;

  AdaGradState() = default;
  AdaGradState(std::size_t params, double base_rate, double epsilon = 1e-8)
      : accumulators(params, 0.0), epsilon(epsilon), base_rate(base_rate) {}
};

/// Adds grad^2 to the accumulator of `param` and returns the additive update
/// -base_rate * grad / sqrt(accumulator + epsilon). Throws NumericError on a
/// non-finite gradient and leaves the state untouched.
double adagrad_step(AdaGradState& state, std::size_t param, double grad);

/// Elementwise max(x, 0).
std::vector<double> project_nonneg(std::span<const double> values);
void project_nonneg_inplace(std::span<double> values) noexcept;

enum class ModelKind { biased_mf, dmf, ptf, dtf };

/// True for the kinds that learn a deviation model.
constexpr bool learns_deviation(ModelKind kind) noexcept {
  return kind == ModelKind::dmf || kind == ModelKind::dtf;
}
constexpr std::size_t mode_count(ModelKind kind) noexcept {
  return kind == ModelKind::ptf || kind == ModelKind::dtf ? 3 : 2;
}

enum class Schedule {
  adagrad,
  /// Plain SGD at the base rate; mainly for comparing iterates across losses.
  constant,
};

struct TrainConfig {
  Hyperparams hp;
  ModelKind model_kind = ModelKind::dmf;
  Schedule schedule = Schedule::adagrad;
  double adagrad_epsilon = 1e-8;
  bool shuffle = true;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t early_stop_patience = 10;
  /// Fraction of the training set held out for validation when no explicit
  /// validation set is passed to train().
  double val_fraction = 0.0;
  /// Start the deviation factors at zero instead of uniform [0, 0.1].
  bool zero_init_deviation = false;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_rmse = 0.0;
  std::optional<double> val_rmse;
  double objective = 0.0;
  double dev_sparsity = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  /// Epoch whose parameters were returned; 0 means the initialization.
  std::size_t best_epoch = 0;
};

/// Instrumentation for tests and diagnostics. `on_step` runs after every
/// per-observation update (including projection); `on_epoch` after every epoch record.
struct TrainHooks {
  std::function<void(const MeanModel&, const DeviationModel&, std::size_t step)> on_step;
  std::function<void(const MeanModel&, const DeviationModel&, const EpochRecord&)> on_epoch;
};

struct TrainResult {
  MeanModel mean;
  DeviationModel dev;
  TrainReport report;
};

/// Random initialization: mean factors i.i.d. uniform in [-0.5/sqrt(D), 0.5/sqrt(D)],
/// zero biases, mu as given, deviation factors i.i.d. uniform in [0, 0.1].
std::pair<MeanModel, DeviationModel> initialize(std::span<const std::size_t> mode_sizes,
                                                const Hyperparams& hp, unsigned seed,
                                                double mu);

/// Stochastic gradient training, one update per observation with projection of the
/// touched deviation rows. Deterministic given (train, val, cfg). Throws
/// DivergenceError when the objective becomes non-finite or a parameter exceeds 1e8.
TrainResult train(const ObservationSet& train_set, const TrainConfig& cfg,
                  const ObservationSet* val_set = nullptr, const TrainHooks& hooks = {});

/// Root mean squared error of the mean prediction over `obs` (0 for an empty set).
double rmse_on(const MeanModel& mean, const ObservationSet& obs);

/// CSV `epoch,train_rmse,val_rmse,objective,dev_sparsity,seconds`. With
/// `include_timing` false the seconds column is left empty so that reruns are byte-identical.
void write_report_csv(std::ostream& out, const TrainReport& report, bool include_timing = true);

}  // namespace devmf
