#pragma once

#include <array>
#include <cstddef>

#include "devmf/model.hpp"

// CP (PARAFAC) mean and deviation models over 3-mode tensors. These are the
// 3-mode instances of MeanModel / DeviationModel; the functions here check the
// mode count and forward to the shared kernels.

namespace devmf::tensor {

using CpMeanModel = MeanModel;
using CpDeviationModel = DeviationModel;

CpMeanModel make_cp_mean(std::array<std::size_t, 3> sizes, std::size_t rank, double mu = 0.0);
CpDeviationModel make_cp_deviation(std::array<std::size_t, 3> sizes, std::size_t rank,
                                   double delta_sigma2);

/// sum_k U_ik V_jk W_tk + u_i + v_j + w_t + mu
double cp_predict_mean(const CpMeanModel& model, Index i, Index j, Index t);

/// sum_k P_ik Q_jk S_tk + delta_sigma2
double cp_predict_variance(const CpDeviationModel& model, Index i, Index j, Index t);

GradientBundle cp_gradient_at(const CpMeanModel& mean, const CpDeviationModel& dev,
                              const Hyperparams& hp, Index i, Index j, Index t, double r,
                              const PriorWeights& weights = {});

/// Lifts a matrix model to a tensor with a single third-mode slice whose W and S
/// rows are all ones (and w = 0). Predictions and gradients on the embedded
/// tensor equal the matrix ones.
std::pair<CpMeanModel, CpDeviationModel> embed_matrix(const MeanModel& mean, const DeviationModel& dev);

}  // namespace devmf::tensor
