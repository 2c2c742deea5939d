#include "devmf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "devmf/error.hpp"
#include "kernels.hpp"

namespace devmf {

namespace {

double prior_weight(double sigma2) noexcept { return std::isinf(sigma2) ? 0.0 : 1.0 / sigma2; }

IndexTuple to_tuple(std::span<const Index> index) {
  if (index.size() < 2 || index.size() > kMaxModes)
    throw ShapeError("an index tuple has 2 or 3 components");
  IndexTuple t{};
  std::copy(index.begin(), index.end(), t.begin());
  return t;
}

void check_index(const std::vector<Matrix>& factors, std::span<const Index> index) {
  if (index.size() != factors.size())
    throw ShapeError("index tuple has " + std::to_string(index.size()) + " components, model has " +
                     std::to_string(factors.size()) + " modes");
  for (std::size_t m = 0; m < index.size(); ++m)
    if (index[m] >= factors[m].rows())
      throw RangeError("index " + std::to_string(index[m]) + " out of range for mode " +
                       std::to_string(m) + " of size " + std::to_string(factors[m].rows()));
}

double squared_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double sum_of(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double prior_terms(const MeanModel& mean, const DeviationModel* dev, const Hyperparams& hp) {
  double total = 0.0;
  for (std::size_t m = 0; m < mean.modes(); ++m) {
    const double w = prior_weight(hp.sigma2(m));
    if (w != 0.0) total += 0.5 * w * squared_norm(mean.factors[m].values());
  }
  if (dev != nullptr)
    for (std::size_t m = 0; m < dev->modes(); ++m)
      if (hp.lambda(m) != 0.0) total += hp.lambda(m) * sum_of(dev->factors[m].values());
  return total;
}

}  // namespace

// ---- Hyperparams -----------------------------------------------------------

void Hyperparams::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  auto nonneg = [](double x, const char* name) {
    if (!(x >= 0.0) || std::isinf(x))
      throw ConfigError(std::string(name) + " must be finite and non-negative");
  };
  positive(sigma_u2, "sigma_u2");
  positive(sigma_v2, "sigma_v2");
  positive(sigma_w2, "sigma_w2");
  nonneg(lambda_p, "lambda_p");
  nonneg(lambda_q, "lambda_q");
  nonneg(lambda_s, "lambda_s");
  positive(delta_sigma2, "delta_sigma2");
  if (std::isinf(delta_sigma2)) throw ConfigError("delta_sigma2 must be finite");
  if (rank_mean == 0) throw ConfigError("rank_mean must be positive");
  if (rank_dev == 0) throw ConfigError("rank_dev must be positive");
  positive(learning_rate, "learning_rate");
  if (dev_learning_rate && !(*dev_learning_rate >= 0.0))
    throw ConfigError("dev_learning_rate must be non-negative");
}

double Hyperparams::sigma2(std::size_t mode) const noexcept {
  switch (mode) {
    case 0: return sigma_u2;
    case 1: return sigma_v2;
    default: return sigma_w2;
  }
}

double Hyperparams::lambda(std::size_t mode) const noexcept {
  switch (mode) {
    case 0: return lambda_p;
    case 1: return lambda_q;
    default: return lambda_s;
  }
}

// ---- models ----------------------------------------------------------------

MeanModel::MeanModel(std::span<const std::size_t> mode_sizes, std::size_t rank, double mu_)
    : mu(mu_) {
  for (std::size_t n : mode_sizes) {
    factors.emplace_back(n, rank);
    biases.emplace_back(n, 0.0);
  }
}

std::vector<std::size_t> MeanModel::mode_sizes() const {
  std::vector<std::size_t> sizes;
  for (const Matrix& f : factors) sizes.push_back(f.rows());
  return sizes;
}

DeviationModel::DeviationModel(std::span<const std::size_t> mode_sizes, std::size_t rank,
                               double delta)
    : delta_sigma2(delta) {
  for (std::size_t n : mode_sizes) factors.emplace_back(n, rank);
}

double DeviationModel::sparsity() const noexcept {
  std::size_t zeros = 0, total = 0;
  for (const Matrix& f : factors) {
    total += f.size();
    zeros += static_cast<std::size_t>(std::count(f.values().begin(), f.values().end(), 0.0));
  }
  return total == 0 ? 1.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

double DeviationModel::min_entry() const noexcept {
  double lo = std::numeric_limits<double>::infinity();
  for (const Matrix& f : factors)
    for (double x : f.values()) lo = std::min(lo, x);
  return lo;
}

void GradientBundle::resize(std::size_t modes, std::size_t rank_mean, std::size_t rank_dev) {
  mean_rows.resize(modes);
  for (auto& r : mean_rows) r.resize(rank_mean);
  biases.resize(modes);
  dev_rows.resize(modes);
  for (auto& r : dev_rows) r.resize(rank_dev);
}

PriorWeights::PriorWeights(const ObservationSet& train, PriorScaling scaling) {
  const auto counts = train.counts();
  scale_.resize(counts.size());
  for (std::size_t m = 0; m < counts.size(); ++m) {
    scale_[m].resize(counts[m].size(), 1.0);
    if (scaling == PriorScaling::unbiased)
      for (std::size_t r = 0; r < counts[m].size(); ++r)
        if (counts[m][r] > 0) scale_[m][r] = 1.0 / static_cast<double>(counts[m][r]);
  }
}

// ---- predictions -----------------------------------------------------------

double predict_mean(const MeanModel& mean, std::span<const Index> index) {
  check_index(mean.factors, index);
  return detail::mean_unchecked(mean, to_tuple(index));
}

double predict_variance(const DeviationModel& dev, std::span<const Index> index) {
  check_index(dev.factors, index);
  return detail::variance_unchecked(dev, to_tuple(index));
}

// ---- losses ----------------------------------------------------------------

double instance_nll(double r, double mean_pred, double var_pred) {
  if (!(var_pred > 0.0)) throw DomainError("predicted variance must be positive");
  const double e = r - mean_pred;
  return e * e / (2.0 * var_pred) + 0.5 * std::log(var_pred);
}

double gaussian_nll(double r, double mean_pred, double var_pred) {
  if (!(var_pred > 0.0)) throw DomainError("predicted variance must be positive");
  const double e = r - mean_pred;
  // -ln( exp(-e^2 / 2v) / sqrt(2 pi v) )
  return e * e / (2.0 * var_pred) + 0.5 * std::log(2.0 * std::numbers::pi * var_pred);
}

void check_compatible(const MeanModel& mean, const DeviationModel& dev,
                      const ObservationSet& obs) {
  if (mean.modes() != dev.modes() || mean.modes() != obs.modes())
    throw ShapeError("mode count mismatch between models and observations");
  if (mean.biases.size() != mean.modes()) throw ShapeError("mean model needs one bias vector per mode");
  for (std::size_t m = 0; m < mean.modes(); ++m) {
    const std::size_t n = obs.mode_sizes[m];
    if (mean.factors[m].rows() != n || dev.factors[m].rows() != n || mean.biases[m].size() != n)
      throw ShapeError("size mismatch on mode " + std::to_string(m));
    if (mean.factors[m].cols() != mean.rank() || dev.factors[m].cols() != dev.rank())
      throw ShapeError("inconsistent rank across modes");
  }
  if (!(dev.delta_sigma2 > 0.0)) throw DomainError("delta_sigma2 must be positive");
}

double objective(const MeanModel& mean, const DeviationModel& dev, const Hyperparams& hp,
                 const ObservationSet& obs) {
  check_compatible(mean, dev, obs);
  double data = 0.0;
  for (const Entry& e : obs.entries)
    data += instance_nll(e.value, detail::mean_unchecked(mean, e.index),
                         detail::variance_unchecked(dev, e.index));
  return data + prior_terms(mean, &dev, hp);
}

double squared_error_objective(const MeanModel& mean, const Hyperparams& hp,
                               const ObservationSet& obs) {
  if (mean.modes() != obs.modes()) throw ShapeError("mode count mismatch");
  for (std::size_t m = 0; m < mean.modes(); ++m)
    if (mean.factors[m].rows() != obs.mode_sizes[m])
      throw ShapeError("size mismatch on mode " + std::to_string(m));
  double sse = 0.0;
  for (const Entry& e : obs.entries) {
    const double r = e.value - detail::mean_unchecked(mean, e.index);
    sse += r * r;
  }
  return sse + 2.0 * prior_terms(mean, nullptr, hp);
}

double single_observation_objective(const MeanModel& mean, const DeviationModel& dev,
                                    const Hyperparams& hp, const Entry& obs,
                                    const PriorWeights& weights) {
  const std::span<const Index> idx(obs.index.data(), mean.modes());
  check_index(mean.factors, idx);
  check_index(dev.factors, idx);
  double loss = instance_nll(obs.value, detail::mean_unchecked(mean, obs.index),
                             detail::variance_unchecked(dev, obs.index));
  for (std::size_t m = 0; m < mean.modes(); ++m) {
    const double c = weights.at(m, obs.index[m]);
    loss += 0.5 * prior_weight(hp.sigma2(m)) * c * squared_norm(mean.factors[m].row(obs.index[m]));
    loss += hp.lambda(m) * c * sum_of(dev.factors[m].row(obs.index[m]));
  }
  return loss;
}

// ---- gradients -------------------------------------------------------------

void gradient_at(const MeanModel& mean, const DeviationModel& dev, const Hyperparams& hp,
                 const Entry& obs, const PriorWeights& weights, GradientBundle& out) {
  const std::size_t modes = mean.modes();
  const std::span<const Index> idx(obs.index.data(), modes);
  check_index(mean.factors, idx);
  check_index(dev.factors, idx);

  out.resize(modes, mean.rank(), dev.rank());
  const double e = obs.value - detail::mean_unchecked(mean, obs.index);
  const double s = detail::variance_unchecked(dev, obs.index);

  std::array<double, kMaxModes> prior_coef{};
  for (std::size_t m = 0; m < modes; ++m)
    prior_coef[m] = prior_weight(hp.sigma2(m)) * weights.at(m, obs.index[m]);
  detail::mean_gradient(mean, obs.index, e / s, std::span(prior_coef.data(), modes),
                        hp.use_biases, out);

  // d/ds [e^2/(2s) + ln(s)/2] = 1/(2s) - e^2/(2s^2)
  const double dev_coef = 1.0 / (2.0 * s) - (e * e) / (2.0 * s * s);
  for (std::size_t m = 0; m < modes; ++m) {
    std::span<double> g = out.dev_rows[m];
    detail::cp_cofactor(dev.factors, obs.index, m, g);
    const double reg = hp.lambda(m) * weights.at(m, obs.index[m]);
    for (double& x : g) x = dev_coef * x + reg;
  }
}

GradientBundle gradient_at(const MeanModel& mean, const DeviationModel& dev,
                           const Hyperparams& hp, const Entry& obs,
                           const PriorWeights& weights) {
  GradientBundle out;
  gradient_at(mean, dev, hp, obs, weights, out);
  return out;
}

void squared_error_gradient_at(const MeanModel& mean, const Hyperparams& hp, const Entry& obs,
                               const PriorWeights& weights, GradientBundle& out) {
  const std::size_t modes = mean.modes();
  check_index(mean.factors, std::span<const Index>(obs.index.data(), modes));
  out.mean_rows.resize(modes);
  for (auto& r : out.mean_rows) r.resize(mean.rank());
  out.biases.resize(modes);
  out.dev_rows.clear();

  const double e = obs.value - detail::mean_unchecked(mean, obs.index);
  std::array<double, kMaxModes> prior_coef{};
  for (std::size_t m = 0; m < modes; ++m)
    prior_coef[m] = 2.0 * (prior_weight(hp.sigma2(m)) * weights.at(m, obs.index[m]));
  detail::mean_gradient(mean, obs.index, 2.0 * e, std::span(prior_coef.data(), modes),
                        hp.use_biases, out);
}

}  // namespace devmf
