#include "devmf/tensor.hpp"

#include <algorithm>

#include "devmf/error.hpp"

namespace devmf::tensor {

namespace {

void require_three_modes(std::size_t modes) {
  if (modes != 3) throw ShapeError("CP models have exactly 3 modes");
}

}  // namespace

CpMeanModel make_cp_mean(std::array<std::size_t, 3> sizes, std::size_t rank, double mu) {
  return MeanModel(sizes, rank, mu);
}

CpDeviationModel make_cp_deviation(std::array<std::size_t, 3> sizes, std::size_t rank,
                                   double delta_sigma2) {
  if (!(delta_sigma2 > 0.0)) throw DomainError("delta_sigma2 must be positive");
  return DeviationModel(sizes, rank, delta_sigma2);
}

double cp_predict_mean(const CpMeanModel& model, Index i, Index j, Index t) {
  require_three_modes(model.modes());
  const std::array<Index, 3> idx{i, j, t};
  return predict_mean(model, idx);
}

double cp_predict_variance(const CpDeviationModel& model, Index i, Index j, Index t) {
  require_three_modes(model.modes());
  const std::array<Index, 3> idx{i, j, t};
  return predict_variance(model, idx);
}

GradientBundle cp_gradient_at(const CpMeanModel& mean, const CpDeviationModel& dev,
                              const Hyperparams& hp, Index i, Index j, Index t, double r,
                              const PriorWeights& weights) {
  require_three_modes(mean.modes());
  require_three_modes(dev.modes());
  return gradient_at(mean, dev, hp, make_entry(i, j, t, r), weights);
}

std::pair<CpMeanModel, CpDeviationModel> embed_matrix(const MeanModel& mean, const DeviationModel& dev) {
  if (mean.modes() != 2 || dev.modes() != 2) throw ShapeError("embed_matrix expects matrix models");
  CpMeanModel cm = mean;
  cm.factors.emplace_back(1, mean.rank(), 1.0);
  cm.biases.emplace_back(1, 0.0);
  CpDeviationModel cd = dev;
  cd.factors.emplace_back(1, dev.rank(), 1.0);
  return {std::move(cm), std::move(cd)};
}

}  // namespace devmf::tensor
