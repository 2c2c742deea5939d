#include "devmf/dlr.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "devmf/error.hpp"

namespace devmf::dlr {

namespace {

std::size_t feature_count(std::span<const RegressionSample> samples) {
  if (samples.empty()) throw ShapeError("no samples");
  const std::size_t d = samples.front().x.size();
  if (d == 0) throw ShapeError("samples need at least one feature");
  for (const auto& s : samples)
    if (s.x.size() != d) throw ShapeError("samples have differing feature counts");
  return d;
}

}  // namespace

WeightVector deviation_weights(std::span<const RegressionSample> samples, double floor) {
  if (!(floor > 0.0)) throw DomainError("weight floor must be positive");
  WeightVector out;
  out.W.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].eps) throw ContractError("sample " + std::to_string(i) + " has no noise value");
    const double e = *samples[i].eps;
    out.W.push_back(e * e + floor);
  }
  return out;
}

std::vector<double> wls_solve(std::span<const RegressionSample> samples, const WeightVector& weights) {
  const std::size_t d = feature_count(samples);
  if (weights.W.size() != samples.size()) throw ShapeError("one weight per sample is required");

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double Wi = weights.W[i];
    if (!(Wi > 0.0) || !std::isfinite(Wi)) throw DomainError("weights must be positive and finite");
    const Eigen::Map<const Eigen::VectorXd> x(samples[i].x.data(), static_cast<Eigen::Index>(d));
    normal.noalias() += (x * x.transpose()) / Wi;
    rhs.noalias() += x * (samples[i].y / Wi);
  }

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  const double scale = pivots.maxCoeff();
  const double tol = scale * static_cast<double>(d) * std::numeric_limits<double>::epsilon();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) || pivots.minCoeff() <= tol)
    throw SingularityError("weighted normal equations are rank deficient");

  const Eigen::VectorXd w = ldlt.solve(rhs);
  return {w.data(), w.data() + w.size()};
}

std::vector<double> ols_solve(std::span<const RegressionSample> samples) {
  return wls_solve(samples, WeightVector{std::vector<double>(samples.size(), 1.0)});
}

double weighted_objective(std::span<const RegressionSample> samples, const WeightVector& weights,
                          std::span<const double> w) {
  if (weights.W.size() != samples.size()) throw ShapeError("one weight per sample is required");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != w.size()) throw ShapeError("feature count mismatch");
    double pred = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) pred += w[k] * samples[i].x[k];
    const double r = samples[i].y - pred;
    total += r * r / weights.W[i];
  }
  return total;
}

std::vector<RegressionSample> line_fit_samples(const LineFitOptions& opt) {
  if (opt.n < 3) throw ConfigError("the regression demo needs at least 3 samples");
  if (!(opt.noise_variance >= 0.0)) throw ConfigError("noise variance must be non-negative");

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(opt.noise_variance));
  std::vector<RegressionSample> samples;
  samples.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    const double x = opt.x_min + (opt.x_max - opt.x_min) * static_cast<double>(i) /
                                     static_cast<double>(opt.n - 1);
    const double eps = opt.noise_variance > 0.0 ? noise(rng) : 0.0;
    RegressionSample s;
    s.x = opt.intercept ? std::vector<double>{x, 1.0} : std::vector<double>{x};
    s.y = x + eps;
    s.eps = eps;
    samples.push_back(std::move(s));
  }
  return samples;
}

LineFitResult line_fit_experiment(const LineFitOptions& opt) {
  const auto samples = line_fit_samples(opt);
  const auto ols = ols_solve(samples);
  const auto dlr = wls_solve(samples, deviation_weights(samples));
  return {std::abs(ols[0] - 1.0), std::abs(dlr[0] - 1.0)};
}

}  // namespace devmf::dlr
