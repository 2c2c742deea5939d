#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "devmf/data.hpp"
#include "devmf/model.hpp"
#include "devmf/observation.hpp"
#include "devmf/optimizer.hpp"

namespace devmf::eval {

struct MetricReport {
  double rmse = 0.0;
  double mse = 0.0;
  std::size_t n = 0;
  std::size_t cold_start_count = 0;
};

/// sqrt(mean((p - t)^2)). Throws ShapeError on a length mismatch or empty input.
double rmse(std::span<const double> predictions, std::span<const double> truths);
double mse(std::span<const double> predictions, std::span<const double> truths);

/// Which test tuples count as cold start and what they are predicted as.
struct ColdStartPolicy {
  double default_value = data::kDefaultRating;
  /// seen[m][row]: row of mode m has at least one training observation.
  std::vector<std::vector<bool>> seen;

  static ColdStartPolicy from_training(const ObservationSet& train, double default_value);
  static ColdStartPolicy from_training(const ObservationSet& train, data::ColdStartKind kind);

  /// True when some index is outside the training sizes or never observed in training.
  bool is_cold(const Entry& e, std::size_t modes) const noexcept;
};

/// Predicts every test tuple with the mean model. Without a policy every index
/// must lie inside the model (ContractError otherwise). Throws ContractError on an
/// empty test set.
MetricReport evaluate_model(const MeanModel& mean, const ObservationSet& test,
                            const ColdStartPolicy* policy = nullptr);

struct VarianceRecovery {
  double correlation = 0.0;
  /// Set when the predicted variance is constant; the correlation is then 0.
  bool degenerate = false;
};

/// Spearman rank correlation (average ranks for ties).
VarianceRecovery spearman(std::span<const double> a, std::span<const double> b);

/// Spearman correlation between the learned variance and `true_variance` at `cells`.
VarianceRecovery variance_recovery(const DeviationModel& dev, const ObservationSet& cells,
                                   std::span<const double> true_variance);

struct SweepMethod {
  std::string name;
  TrainConfig config;
};

struct SweepCell {
  std::string method;
  double fraction = 0.0;
  std::size_t repeat = 0;
  MetricReport metrics;
};

struct SweepRow {
  double train_fraction = 0.0;
  std::string method;
  /// Mean over repeats.
  double mse = 0.0;
  std::size_t repeats = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
};

struct SweepOptions {
  std::vector<double> fractions;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  data::ColdStartKind cold_start = data::ColdStartKind::global_mean;
};

/// For every (fraction, repeat) subsamples `pool` once, trains every method on the
/// subsample and evaluates on the fixed `test` set. Repeat r trains with the
/// method's seed + r. Fractions must be strictly increasing within (0, 1].
SweepResult sweep_train_fraction(const ObservationSet& pool, const ObservationSet& test,
                                 std::span<const SweepMethod> methods, const SweepOptions& options);

/// CSV `method,fraction,repeat,rmse,mse,n,cold_start_count`.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const std::string& method, double fraction,
                       std::size_t repeat, const MetricReport& m);
void write_sweep_csv(std::ostream& out, const SweepResult& result);

/// First epoch whose validation RMSE is within `relative` of the run's best one;
/// empty when the report has no validation records.
std::optional<std::size_t> epochs_to_converge(const TrainReport& report, double relative = 0.02);

}  // namespace devmf::eval
