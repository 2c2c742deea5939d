#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "devmf/matrix.hpp"
#include "devmf/observation.hpp"

namespace devmf {

/// How the per-row prior gradient is spread over the stochastic steps of one epoch.
enum class PriorScaling {
  /// Divide by the number of observations touching the row, so that one epoch of
  /// per-observation gradients sums to the full-batch gradient.
  unbiased,
  /// Apply the full prior gradient at every step touching the row.
  per_sample,
};

/// Fixed hyperparameters of the mean and deviation models.
///
/// Prior variances may be +infinity, which switches the corresponding Gaussian
/// prior off. The third-mode fields are only read for tensor models.
struct Hyperparams {
  double sigma_u2 = 1.0;
  double sigma_v2 = 1.0;
  double sigma_w2 = 1.0;
  double lambda_p = 0.01;
  double lambda_q = 0.01;
  double lambda_s = 0.01;
  double delta_sigma2 = 0.01;
  std::size_t rank_mean = 10;
  std::size_t rank_dev = 10;
  double learning_rate = 0.05;
  /// Base rate for the deviation factors; falls back to `learning_rate`.
  std::optional<double> dev_learning_rate;
  std::size_t epochs = 100;
  unsigned seed = 0;
  PriorScaling prior_scaling = PriorScaling::unbiased;
  /// Learn per-mode bias terms. Disable for a strict PARAFAC/MF mean.
  bool use_biases = true;

  /// Throws ConfigError when a positivity constraint is broken.
  void validate() const;

  double sigma2(std::size_t mode) const noexcept;
  double lambda(std::size_t mode) const noexcept;
  double dev_rate() const noexcept { return dev_learning_rate.value_or(learning_rate); }
};

/// Low-rank mean model: one D-column factor matrix and one bias vector per mode,
/// plus the global mean. Two modes give U_i.V_j + u_i + v_j + mu; three modes the
/// CP (PARAFAC) form sum_k U_ik V_jk W_tk + u_i + v_j + w_t + mu.
struct MeanModel {
  std::vector<Matrix> factors;
  std::vector<std::vector<double>> biases;
  double mu = 0.0;

  MeanModel() = default;
  MeanModel(std::span<const std::size_t> mode_sizes, std::size_t rank, double mu = 0.0);

  std::size_t modes() const noexcept { return factors.size(); }
  std::size_t rank() const noexcept { return factors.empty() ? 0 : factors.front().cols(); }
  std::vector<std::size_t> mode_sizes() const;

  Matrix& U() { return factors.at(0); }
  Matrix& V() { return factors.at(1); }
  Matrix& W() { return factors.at(2); }
  const Matrix& U() const { return factors.at(0); }
  const Matrix& V() const { return factors.at(1); }
  const Matrix& W() const { return factors.at(2); }

  bool operator==(const MeanModel&) const = default;
};

/// Non-negative low-rank variance model: sigma^2 = P_i.Q_j (+ CP product for 3 modes) + floor.
struct DeviationModel {
  std::vector<Matrix> factors;
  double delta_sigma2 = 0.01;

  DeviationModel() = default;
  DeviationModel(std::span<const std::size_t> mode_sizes, std::size_t rank, double delta_sigma2);

  std::size_t modes() const noexcept { return factors.size(); }
  std::size_t rank() const noexcept { return factors.empty() ? 0 : factors.front().cols(); }

  Matrix& P() { return factors.at(0); }
  Matrix& Q() { return factors.at(1); }
  Matrix& S() { return factors.at(2); }
  const Matrix& P() const { return factors.at(0); }
  const Matrix& Q() const { return factors.at(1); }
  const Matrix& S() const { return factors.at(2); }

  /// Fraction of factor entries that are exactly zero; 1 for an empty model.
  double sparsity() const noexcept;
  /// Smallest factor entry (+inf for an empty model).
  double min_entry() const noexcept;

  bool operator==(const DeviationModel&) const = default;
};

/// Gradient of the single-observation loss with respect to the factor rows and
/// biases the observation touches. Index m runs over modes.
struct GradientBundle {
  std::vector<std::vector<double>> mean_rows;
  std::vector<double> biases;
  std::vector<std::vector<double>> dev_rows;

  void resize(std::size_t modes, std::size_t rank_mean, std::size_t rank_dev);
};

/// Per-step multiplier applied to the prior gradient of each (mode, row).
/// Built from the training set: 1/n_row for unbiased scaling, 1 for per-sample.
class PriorWeights {
 public:
  PriorWeights() = default;
  PriorWeights(const ObservationSet& train, PriorScaling scaling);

  /// Multiplier for `row` of `mode`; 1 when nothing was recorded.
  double at(std::size_t mode, std::size_t row) const noexcept {
    if (mode >= scale_.size() || row >= scale_[mode].size()) return 1.0;
    return scale_[mode][row];
  }

 private:
  std::vector<std::vector<double>> scale_;
};

// ---- predictions -----------------------------------------------------------

double predict_mean(const MeanModel& mean, std::span<const Index> index);
inline double predict_mean(const MeanModel& mean, Index i, Index j) {
  const std::array<Index, 2> idx{i, j};
  return predict_mean(mean, idx);
}

double predict_variance(const DeviationModel& dev, std::span<const Index> index);
inline double predict_variance(const DeviationModel& dev, Index i, Index j) {
  const std::array<Index, 2> idx{i, j};
  return predict_variance(dev, idx);
}

// ---- losses ----------------------------------------------------------------

/// (r - m)^2 / (2 v) + ln(v) / 2. Throws DomainError when v <= 0.
double instance_nll(double r, double mean_pred, double var_pred);

/// Negative log of the Gaussian density N(r; m, v). Equals instance_nll + ln(2 pi)/2.
double gaussian_nll(double r, double mean_pred, double var_pred);

/// Negative log posterior of the deviation-driven model, dropping terms that only
/// depend on hyperparameters:
///   sum_obs instance_nll + sum_m sum_rows |F_m,row|^2 / (2 sigma_m^2) + sum_m lambda_m sum(G_m).
double objective(const MeanModel& mean, const DeviationModel& dev, const Hyperparams& hp,
                 const ObservationSet& obs);

/// Regularized squared-error loss of the bias-augmented baseline (Biased MF / PTF):
///   sum_obs (r - r_hat)^2 + sum_m sum_rows |F_m,row|^2 / sigma_m^2.
/// This is exactly twice the deviation objective with zero deviation factors and unit floor.
double squared_error_objective(const MeanModel& mean, const Hyperparams& hp,
                               const ObservationSet& obs);

/// Loss whose gradient gradient_at returns: the observation's data term plus the
/// share of the priors on the touched rows given by `weights`.
double single_observation_objective(const MeanModel& mean, const DeviationModel& dev,
                                    const Hyperparams& hp, const Entry& obs,
                                    const PriorWeights& weights = {});

// ---- gradients -------------------------------------------------------------

/// Analytic gradient of single_observation_objective. The descent direction is -gradient.
GradientBundle gradient_at(const MeanModel& mean, const DeviationModel& dev,
                           const Hyperparams& hp, const Entry& obs,
                           const PriorWeights& weights = {});

/// In-place variant for hot loops; `out` is resized as needed.
void gradient_at(const MeanModel& mean, const DeviationModel& dev, const Hyperparams& hp,
                 const Entry& obs, const PriorWeights& weights, GradientBundle& out);

/// Gradient of the squared-error baseline for one observation; `out.dev_rows` is left empty.
void squared_error_gradient_at(const MeanModel& mean, const Hyperparams& hp, const Entry& obs,
                               const PriorWeights& weights, GradientBundle& out);

/// Throws ShapeError/RangeError unless `mean`, `dev` and `obs` agree on modes and sizes.
void check_compatible(const MeanModel& mean, const DeviationModel& dev, const ObservationSet& obs);

}  // namespace devmf
