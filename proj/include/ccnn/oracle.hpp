#pragma once

#include <vector>

#include "ccnn/constraints.hpp"
#include "ccnn/matrix.hpp"

namespace ccnn {

/// Independent reference solvers for the constrained projection. Each uses
/// a different algorithmic principle than the shipped solver (bisection,
/// exhaustive grid, primal penalty descent), so agreement between them is
/// evidence rather than tautology. Test and `solve --check` use only; never
/// on the training path.
namespace oracle {

struct OracleResult {
  LabelDistribution p;
  std::vector<double> lambda;
};

/// Single-constraint solver: bisection on g(lambda) = A vec(P(lambda)) - b,
/// which is monotone in lambda, to |g| <= 1e-10, clamped to [0, beta].
OracleResult bisection_oracle(const ScoreMatrix& scores, const ConstraintRow& row);

/// k <= 2 solver: exhaustive grid over [0, min(beta_j, 20)] per dual
/// coordinate at the given resolution (points per axis), followed by local
/// refinement passes of the same resolution around the best cell until the
/// cell width drops below 1e-5 (at most four passes).
OracleResult grid_oracle(const ScoreMatrix& scores, const ConstraintSet& cs, int resolution);

/// Primal-side solver: mirror descent on the KL objective with proximally
/// smoothed constraint terms and an outer multiplier update at a fixed
/// penalty weight (slack rows cap their multiplier at beta). Requires
/// satisfiable hard constraints.
LabelDistribution primal_descent_oracle(const ScoreMatrix& scores, const ConstraintSet& cs,
                                        long iters = 100000);

}  // namespace oracle
}  // namespace ccnn
