#include "ccnn/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ccnn {

LabelDistribution softmax(const ScoreMatrix& scores, kernels::Exec exec) {
  const int n = scores.pixels();
  const int m = scores.labels();
  std::vector<double> probs(static_cast<std::size_t>(n) * m);
  kernels::softmax_rows(n, m, scores.data(), nullptr, probs.data(), nullptr, exec);
  return LabelDistribution(n, m, std::move(probs));
}

double log_sum_exp(std::span<const double> row) {
  if (row.empty()) throw std::invalid_argument("log_sum_exp: empty row");
  double shift = row[0];
  for (double v : row) {
    if (!std::isfinite(v)) throw std::invalid_argument("log_sum_exp: non-finite entry");
    shift = std::max(shift, v);
  }
  if (row.size() == 1) return row[0];
  double z = 0.0;
  for (double v : row) z += std::exp(v - shift);
  return shift + std::log(z);
}

}  // namespace ccnn
