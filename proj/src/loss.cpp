#include "ccnn/loss.hpp"

#include <vector>

namespace ccnn {

double cross_entropy(const LabelDistribution& p, const LabelDistribution& q,
                     kernels::Exec exec) {
  require_same_shape(p, q);
  return kernels::cross_entropy(p.pixels(), p.labels(), p.data(), q.data(), exec);
}

double entropy(const LabelDistribution& p, kernels::Exec exec) {
  return kernels::entropy(p.pixels(), p.labels(), p.data(), exec);
}

double kl_divergence(const LabelDistribution& p, const LabelDistribution& q,
                     kernels::Exec exec) {
  require_same_shape(p, q);
  return cross_entropy(p, q, exec) - entropy(p, exec);
}

ScoreMatrix score_gradient(const LabelDistribution& p, const LabelDistribution& q,
                           kernels::Exec exec) {
  require_same_shape(p, q);
  const std::size_t count = static_cast<std::size_t>(p.pixels()) * p.labels();
  std::vector<double> grad(count);
  kernels::subtract(count, q.data(), p.data(), grad.data(), exec);
  return ScoreMatrix(p.pixels(), p.labels(), std::move(grad));
}

}  // namespace ccnn
