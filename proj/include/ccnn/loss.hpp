#pragma once

#include "ccnn/kernels.hpp"
#include "ccnn/matrix.hpp"

namespace ccnn {

/// -sum_i sum_l p_i(l) log q_i(l), with 0 log 0 = 0 on p. q must come from
/// a softmax, so its entries are strictly positive and no flooring happens.
double cross_entropy(const LabelDistribution& p, const LabelDistribution& q,
                     kernels::Exec exec = kernels::default_exec());

/// -sum_i sum_l p_i(l) log p_i(l).
double entropy(const LabelDistribution& p, kernels::Exec exec = kernels::default_exec());

/// cross_entropy(p, q) - entropy(p); nonnegative.
double kl_divergence(const LabelDistribution& p, const LabelDistribution& q,
                     kernels::Exec exec = kernels::default_exec());

/// Gradient of cross_entropy(p, softmax(f)) with respect to the scores f:
/// entry (i, l) = q_i(l) - p_i(l). Rows sum to zero.
ScoreMatrix score_gradient(const LabelDistribution& p, const LabelDistribution& q,
                           kernels::Exec exec = kernels::default_exec());

}  // namespace ccnn
