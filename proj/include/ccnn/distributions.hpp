#pragma once

#include <span>

#include "ccnn/kernels.hpp"
#include "ccnn/matrix.hpp"

namespace ccnn {

/// Row-wise softmax of the scores, computed with a per-row max shift.
LabelDistribution softmax(const ScoreMatrix& scores,
                          kernels::Exec exec = kernels::default_exec());

/// log sum_j exp(row[j]) via max shift. Exact for single-element rows.
double log_sum_exp(std::span<const double> row);

}  // namespace ccnn
