#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace devmf::dlr {

/// Weight floor added to eps^2 so that a noise-free sample keeps a finite objective.
inline constexpr double kWeightFloor = 1e-12;

struct RegressionSample {
  std::vector<double> x;
  double y = 0.0;
  /// Sampled noise; only known for synthetic data.
  std::optional<double> eps;
};

/// Per-sample weights W_i > 0; sample i contributes (y_i - w.x_i)^2 / W_i.
struct WeightVector {
  std::vector<double> W;
};

/// W_i = eps_i^2 + floor. Throws ContractError when a sample has no eps.
WeightVector deviation_weights(std::span<const RegressionSample> samples,
                               double floor = kWeightFloor);

/// argmin_w sum_i (y_i - w.x_i)^2 / W_i via the weighted normal equations.
/// Throws SingularityError on a rank-deficient system, ShapeError on ragged input.
std::vector<double> wls_solve(std::span<const RegressionSample> samples, const WeightVector& weights);

/// Ordinary least squares, i.e. wls_solve with unit weights.
std::vector<double> ols_solve(std::span<const RegressionSample> samples);

/// Weighted objective sum_i (y_i - w.x_i)^2 / W_i.
double weighted_objective(std::span<const RegressionSample> samples, const WeightVector& weights,
                          std::span<const double> w);

struct LineFitOptions {
  std::size_t n = 20;
  unsigned seed = 0;
  /// Variance of the Gaussian noise added to y = x.
  double noise_variance = 0.01;
  double x_min = 0.0;
  double x_max = 1.0;
  bool intercept = true;
};

struct LineFitResult {
  double ols_param_error = 0.0;
  double dlr_param_error = 0.0;
};

/// Samples y_i = x_i + eps_i on an evenly spaced grid and reports |slope - 1| for
/// OLS and for WLS weighted by the true eps_i^2. Needs n >= 3.
std::vector<RegressionSample> line_fit_samples(const LineFitOptions& opt);
LineFitResult line_fit_experiment(const LineFitOptions& opt);

}  // namespace devmf::dlr
