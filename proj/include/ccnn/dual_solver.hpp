#pragma once

#include <span>
#include <vector>

#include "ccnn/constraints.hpp"
#include "ccnn/matrix.hpp"

namespace ccnn {

struct SolverConfig {
  int max_iters = 50;
  double step_size = 0.0;   // initial step; 0 selects 1/n
  double tolerance = 1e-6;  // on the stationarity residual (see solve)
  bool backtracking = true;
  double lambda_cap = 1e6;  // keeps hard rows finite on infeasible systems

  void validate() const;
};

/// Dual variables and per-iteration diagnostics of one projected ascent run.
struct DualState {
  std::vector<double> lambda;
  int iterations = 0;
  bool converged = false;
  std::vector<double> dual_values;   // L(lambda) per accepted iterate, initial first
  std::vector<double> residuals;     // stopping residual per iterate, initial first
  std::vector<std::vector<double>> lambda_trace;  // iterate sequence, initial first
  double max_violation = 0.0;        // worst b_j - A_j vec(P) at the returned P
};

struct SolveResult {
  LabelDistribution p;
  DualState state;
};

/// p_i(l) proportional to exp(f_i(l) + A_{i;l}^T lambda), rows normalized
/// with max-shift stability. lambda = 0 reproduces softmax(scores) exactly.
LabelDistribution biased_distribution(const ScoreMatrix& scores, const ConstraintSet& cs,
                                      std::span<const double> lambda);

/// lambda^T b - sum_i log sum_l exp(f_i(l) + A_{i;l}^T lambda).
double dual_value(std::span<const double> lambda, const ScoreMatrix& scores,
                  const ConstraintSet& cs);

/// b - A vec(P) at P = biased_distribution(scores, cs, lambda).
std::vector<double> dual_gradient(std::span<const double> lambda, const ScoreMatrix& scores,
                                  const ConstraintSet& cs);

/// Componentwise clamp of lambda to [0, beta_j].
std::vector<double> project(std::span<const double> lambda, std::span<const double> betas);

/// Maximizes the dual over the box [0, beta] by projected gradient ascent
/// with backtracking halving (and re-doubling up to the initial step), then
/// returns the biased distribution at the final lambda. A candidate whose
/// dual gain is inside the value's rounding noise (a few ulps) is judged by
/// an exact difference evaluation instead of a comparison of rounded
/// totals, and on acceptance its dual is recorded as current + difference;
/// this keeps ascent verifiable (and the recorded trace nondecreasing) far
/// below the floor where directly compared duals stop carrying information.
///
/// The stopping residual per row is the box-projected gradient:
///   max(0, g_j)  at the boundaries (saturated slack rows stay violated),
///   |g_j|        for interior lambda_j,
/// with g = b - A vec(P). Non-convergence within max_iters is reported in
/// DualState, not thrown.
SolveResult solve(const ScoreMatrix& scores, const ConstraintSet& cs, const SolverConfig& config,
                  std::span<const double> warm_start = {});

}  // namespace ccnn
