#pragma once

// Unchecked inner loops shared by the model and the trainer. Callers guarantee
// that indices are in range and that mean/deviation agree on the mode count.

#include <cstddef>
#include <span>

#include "devmf/model.hpp"

namespace devmf::detail {

/// sum_k prod_m F_m[idx_m][k]
inline double cp_product(const std::vector<Matrix>& factors, const IndexTuple& idx) noexcept {
  const std::size_t modes = factors.size();
  const std::size_t rank = factors.front().cols();
  const double* a = factors[0].row(idx[0]).data();
  const double* b = factors[1].row(idx[1]).data();
  double sum = 0.0;
  if (modes == 2) {
    for (std::size_t k = 0; k < rank; ++k) sum += a[k] * b[k];
  } else {
    const double* c = factors[2].row(idx[2]).data();
    for (std::size_t k = 0; k < rank; ++k) sum += a[k] * b[k] * c[k];
  }
  return sum;
}

/// Writes prod_{m' != m} F_m'[idx_m'][k] into `out` (length = rank).
inline void cp_cofactor(const std::vector<Matrix>& factors, const IndexTuple& idx,
                        std::size_t mode, std::span<double> out) noexcept {
  const std::size_t modes = factors.size();
  const std::size_t rank = factors.front().cols();
  for (std::size_t k = 0; k < rank; ++k) out[k] = 1.0;
  for (std::size_t m = 0; m < modes; ++m) {
    if (m == mode) continue;
    const double* f = factors[m].row(idx[m]).data();
    for (std::size_t k = 0; k < rank; ++k) out[k] *= f[k];
  }
}

inline double mean_unchecked(const MeanModel& mean, const IndexTuple& idx) noexcept {
  double pred = cp_product(mean.factors, idx) + mean.mu;
  for (std::size_t m = 0; m < mean.biases.size(); ++m) pred += mean.biases[m][idx[m]];
  return pred;
}

inline double variance_unchecked(const DeviationModel& dev, const IndexTuple& idx) noexcept {
  return cp_product(dev.factors, idx) + dev.delta_sigma2;
}

/// Mean-parameter gradient shared by both losses:
///   d mean_row_m = -data_coef * cofactor_m + prior_coef_m * row_m,  d bias_m = -data_coef.
/// The deviation loss uses data_coef = e/s and prior_coef = w_m c_m; the squared
/// loss uses 2e and 2 w_m c_m, which makes it exactly twice the former at s = 1.
inline void mean_gradient(const MeanModel& mean, const IndexTuple& idx, double data_coef,
                          std::span<const double> prior_coef, bool use_biases,
                          GradientBundle& out) noexcept {
  const std::size_t modes = mean.modes();
  const std::size_t rank = mean.rank();
  for (std::size_t m = 0; m < modes; ++m) {
    std::span<double> g = out.mean_rows[m];
    cp_cofactor(mean.factors, idx, m, g);
    const double* row = mean.factors[m].row(idx[m]).data();
    for (std::size_t k = 0; k < rank; ++k) g[k] = -data_coef * g[k] + prior_coef[m] * row[k];
    out.biases[m] = use_biases ? -data_coef : 0.0;
  }
}

}  // namespace devmf::detail
