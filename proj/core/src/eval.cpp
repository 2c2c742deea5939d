#include "devmf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "devmf/error.hpp"
#include "devmf/serialize.hpp"

namespace devmf::eval {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double mse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size()) throw ShapeError("predictions and truths differ in length");
  if (predictions.empty()) throw ShapeError("no predictions");
  double sse = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double d = predictions[k] - truths[k];
    sse += d * d;
  }
  return sse / static_cast<double>(predictions.size());
}

double rmse(std::span<const double> predictions, std::span<const double> truths) {
  return std::sqrt(mse(predictions, truths));
}

ColdStartPolicy ColdStartPolicy::from_training(const ObservationSet& train, double default_value) {
  ColdStartPolicy p;
  p.default_value = default_value;
  for (std::size_t n : train.mode_sizes) p.seen.emplace_back(n, false);
  for (const Entry& e : train.entries)
    for (std::size_t m = 0; m < train.modes(); ++m) p.seen[m][e.index[m]] = true;
  return p;
}

ColdStartPolicy ColdStartPolicy::from_training(const ObservationSet& train, data::ColdStartKind kind) {
  return from_training(train, data::cold_start_default(kind, train.mean_value()));
}

bool ColdStartPolicy::is_cold(const Entry& e, std::size_t modes) const noexcept {
  for (std::size_t m = 0; m < modes; ++m) {
    if (m >= seen.size() || e.index[m] >= seen[m].size()) return true;
    if (!seen[m][e.index[m]]) return true;
  }
  return false;
}

MetricReport evaluate_model(const MeanModel& mean, const ObservationSet& test,
                            const ColdStartPolicy* policy) {
  if (test.empty()) throw ContractError("cannot evaluate on an empty test set");
  if (test.modes() != mean.modes()) throw ShapeError("test set and model differ in mode count");
  const std::size_t modes = mean.modes();

  std::vector<double> pred, truth;
  pred.reserve(test.size());
  truth.reserve(test.size());
  MetricReport report;
  for (const Entry& e : test.entries) {
    const std::span<const Index> idx(e.index.data(), modes);
    bool in_model = true;
    for (std::size_t m = 0; m < modes; ++m) in_model = in_model && e.index[m] < mean.factors[m].rows();
    if (policy != nullptr && (policy->is_cold(e, modes) || !in_model)) {
      pred.push_back(policy->default_value);
      ++report.cold_start_count;
    } else {
      if (!in_model) throw ContractError("test tuple outside the model and no cold-start policy configured");
      pred.push_back(predict_mean(mean, idx));
    }
    truth.push_back(e.value);
  }
  report.n = test.size();
  report.mse = mse(pred, truth);
  report.rmse = std::sqrt(report.mse);
  return report;
}

VarianceRecovery spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman inputs differ in length");
  if (a.size() < 2) throw ShapeError("spearman needs at least two points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean_rank = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    const double da = ra[k] - mean_rank, db = rb[k] - mean_rank;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

VarianceRecovery variance_recovery(const DeviationModel& dev, const ObservationSet& cells,
                                   std::span<const double> true_variance) {
  if (cells.size() != true_variance.size()) throw ShapeError("one true variance per cell is required");
  std::vector<double> pred;
  pred.reserve(cells.size());
  for (const Entry& e : cells.entries)
    pred.push_back(predict_variance(dev, std::span<const Index>(e.index.data(), cells.modes())));
  return spearman(pred, true_variance);
}

SweepResult sweep_train_fraction(const ObservationSet& pool, const ObservationSet& test,
                                 std::span<const SweepMethod> methods, const SweepOptions& options) {
  if (options.repeats == 0) throw ConfigError("repeats must be at least 1");
  if (options.fractions.empty()) throw ConfigError("no training fractions given");
  for (std::size_t k = 0; k < options.fractions.size(); ++k) {
    const double f = options.fractions[k];
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("training fractions must lie in (0, 1]");
    if (k > 0 && !(f > options.fractions[k - 1])) throw ConfigError("training fractions must be strictly increasing");
  }

  SweepResult result;
  for (std::size_t fi = 0; fi < options.fractions.size(); ++fi) {
    const double fraction = options.fractions[fi];
    std::vector<double> mse_sum(methods.size(), 0.0);
    for (std::size_t r = 0; r < options.repeats; ++r) {
      const ObservationSet sub =
          fraction == 1.0 ? pool
                          : data::subsample(pool, fraction, options.seed + 7919ULL * fi + 104729ULL * r);
      const ColdStartPolicy policy = ColdStartPolicy::from_training(sub, options.cold_start);
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        TrainConfig cfg = methods[mi].config;
        cfg.hp.seed += static_cast<unsigned>(r);
        const TrainResult trained = train(sub, cfg);
        SweepCell cell{methods[mi].name, fraction, r, evaluate_model(trained.mean, test, &policy)};
        mse_sum[mi] += cell.metrics.mse;
        result.cells.push_back(std::move(cell));
      }
    }
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
      result.rows.push_back({fraction, methods[mi].name,
                             mse_sum[mi] / static_cast<double>(options.repeats), options.repeats});
  }
  return result;
}

void write_metrics_header(std::ostream& out) { out << "method,fraction,repeat,rmse,mse,n,cold_start_count\n"; }

void write_metrics_row(std::ostream& out, const std::string& method, double fraction,
                       std::size_t repeat, const MetricReport& m) {
  out << method << ',' << format_exact(fraction) << ',' << repeat << ',' << format_exact(m.rmse) << ','
      << format_exact(m.mse) << ',' << m.n << ',' << m.cold_start_count << '\n';
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  write_metrics_header(out);
  for (const SweepCell& c : result.cells) write_metrics_row(out, c.method, c.fraction, c.repeat, c.metrics);
}

std::optional<std::size_t> epochs_to_converge(const TrainReport& report, double relative) {
  double best = std::numeric_limits<double>::infinity();
  for (const EpochRecord& r : report.epochs)
    if (r.val_rmse) best = std::min(best, *r.val_rmse);
  if (!std::isfinite(best)) return std::nullopt;
  for (const EpochRecord& r : report.epochs)
    if (r.val_rmse && *r.val_rmse <= best * (1.0 + relative)) return r.epoch;
  return std::nullopt;
}

}  // namespace devmf::eval
