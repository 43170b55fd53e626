#include "ccnn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ccnn/distributions.hpp"
#include "ccnn/dual_solver.hpp"
#include "ccnn/kernels.hpp"

namespace ccnn::oracle {

namespace {

/// Buffer-reusing dual evaluator; the grid oracle calls it ~resolution^2
/// times per instance.
class DualEvaluator {
 public:
  DualEvaluator(const ScoreMatrix& scores, const ConstraintSet& cs)
      : scores_(scores),
        cs_(cs),
        bounds_(cs.bounds()),
        bias_(static_cast<std::size_t>(scores.pixels()) * scores.labels()),
        probs_(bias_.size()),
        row_lse_(scores.pixels()) {}

  double value(std::span<const double> lambda) {
    std::fill(bias_.begin(), bias_.end(), 0.0);
    cs_.accumulate_bias(lambda, bias_.data());
    kernels::softmax_rows(scores_.pixels(), scores_.labels(), scores_.data(), bias_.data(),
                          probs_.data(), row_lse_.data(), kernels::Exec::Serial);
    double lam_b = 0.0;
    for (std::size_t j = 0; j < lambda.size(); ++j) lam_b += lambda[j] * bounds_[j];
    return lam_b - kernels::fixed_order_sum(row_lse_.data(), row_lse_.size());
  }

 private:
  const ScoreMatrix& scores_;
  const ConstraintSet& cs_;
  std::vector<double> bounds_;
  std::vector<double> bias_;
  std::vector<double> probs_;
  std::vector<double> row_lse_;
};

std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> xs(points);
  if (points == 1) {
    xs[0] = lo;
    return xs;
  }
  const double step = (hi - lo) / (points - 1);
  for (int i = 0; i < points; ++i) xs[i] = lo + step * i;
  xs.back() = hi;
  return xs;
}

}  // namespace

OracleResult bisection_oracle(const ScoreMatrix& scores, const ConstraintRow& row) {
  const auto cs = ConstraintSet::assemble({row}, scores.pixels(), scores.labels());
  const double hi_box = std::min(row.slack_weight, 1e6);

  auto g = [&](double lam) {
    const double l[1] = {lam};
    auto p = biased_distribution(scores, cs, std::span<const double>(l, 1));
    return cs.values(p)[0] - row.bound;
  };

  double lambda = 0.0;
  if (g(0.0) < 0.0) {
    // expand the bracket until the constraint value crosses the bound
    double lo = 0.0;
    double hi = std::min(1.0, hi_box);
    while (hi < hi_box && g(hi) < 0.0) {
      lo = hi;
      hi = std::min(hi * 2.0, hi_box);
    }
    if (g(hi) < 0.0) {
      lambda = hi_box;  // infeasible within the box; clamp to the endpoint
    } else {
      double mid = 0.5 * (lo + hi);
      for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        // both a small constraint residual and a tight bracket, so lambda
        // itself is pinned to ~1e-11 regardless of the local slope
        if (std::abs(gm) <= 1e-10 && hi - lo <= 1e-11) break;
        if (gm < 0.0)
          lo = mid;
        else
          hi = mid;
      }
      lambda = mid;
    }
  }

  lambda = std::min(std::max(lambda, 0.0), row.slack_weight);
  const double l[1] = {lambda};
  return {biased_distribution(scores, cs, std::span<const double>(l, 1)), {lambda}};
}

OracleResult grid_oracle(const ScoreMatrix& scores, const ConstraintSet& cs, int resolution) {
  if (resolution < 2) throw std::invalid_argument("grid_oracle: resolution must be >= 2");
  const int k = cs.size();
  if (k == 0) return {softmax(scores), {}};
  if (k > 2) throw std::invalid_argument("grid_oracle: only k <= 2 is supported");

  const auto betas = cs.slack_weights();
  std::vector<double> hi(k);
  for (int j = 0; j < k; ++j) hi[j] = std::min(betas[j], 20.0);

  DualEvaluator eval(scores, cs);

  auto search = [&](const std::vector<double>& lo_corner, const std::vector<double>& hi_corner) {
    std::vector<std::vector<double>> axes(k);
    for (int j = 0; j < k; ++j) axes[j] = linspace(lo_corner[j], hi_corner[j], resolution);

    std::vector<double> best(k, 0.0);
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<double> lambda(k);
    if (k == 1) {
      for (double x : axes[0]) {
        lambda[0] = x;
        const double v = eval.value(lambda);
        if (v > best_value) {
          best_value = v;
          best = lambda;
        }
      }
    } else {
      for (double x : axes[0]) {
        lambda[0] = x;
        for (double y : axes[1]) {
          lambda[1] = y;
          const double v = eval.value(lambda);
          if (v > best_value) {
            best_value = v;
            best = lambda;
          }
        }
      }
    }
    return best;
  };

  std::vector<double> lo(k, 0.0);
  auto best = search(lo, hi);

  // refinement passes: re-grid +-one cell around the best point at the same
  // resolution until the cell width is negligible against the dual's scale
  std::vector<double> width(k);
  for (int j = 0; j < k; ++j) width[j] = hi[j] / (resolution - 1);
  for (int pass = 0; pass < 4; ++pass) {
    if (*std::max_element(width.begin(), width.end()) < 1e-5) break;
    std::vector<double> ref_lo(k), ref_hi(k);
    for (int j = 0; j < k; ++j) {
      ref_lo[j] = std::max(0.0, best[j] - width[j]);
      ref_hi[j] = std::min(hi[j], best[j] + width[j]);
      width[j] = (ref_hi[j] - ref_lo[j]) / (resolution - 1);
    }
    best = search(ref_lo, ref_hi);
  }

  return {biased_distribution(scores, cs, best), best};
}

LabelDistribution primal_descent_oracle(const ScoreMatrix& scores, const ConstraintSet& cs,
                                        long iters) {
  const int ni = scores.pixels();
  const int mi = scores.labels();
  const auto n = static_cast<std::size_t>(ni);
  const auto m = static_cast<std::size_t>(mi);
  const std::size_t count = n * m;
  const auto bounds = cs.bounds();
  const int k = cs.size();

  // reference log q, kept as shifted scores so log p - log q is stable
  std::vector<double> q_log(count);
  std::vector<double> q_lse(n);
  {
    std::vector<double> scratch(count);
    kernels::softmax_rows(n, m, scores.data(), nullptr, scratch.data(), q_lse.data(),
                          kernels::Exec::Serial);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < m; ++l) q_log[i * m + l] = scores.data()[i * m + l] - q_lse[i];
  }

  std::vector<double> s(scores.data(), scores.data() + count);  // log-space iterate
  std::vector<double> p(count), p_lse(n), values(k);

  auto refresh = [&](const std::vector<double>& logits, std::vector<double>& probs,
                     std::vector<double>& lse, std::vector<double>& vals) {
    kernels::softmax_rows(n, m, logits.data(), nullptr, probs.data(), lse.data(),
                          kernels::Exec::Serial);
    cs.values_raw(probs.data(), vals.data(), kernels::Exec::Serial);
  };

  refresh(s, p, p_lse, values);
  if (k == 0) return LabelDistribution(ni, mi, std::move(p));

  // Multiplier estimates and their proximal update. A fixed moderate
  // penalty weight keeps every inner problem well conditioned (a doubling
  // schedule eventually freezes the multiplicative updates and strands the
  // objective first-order short of the optimum); accuracy comes from the
  // outer multiplier iteration instead, which contracts linearly. Slack
  // rows cap their multiplier at beta, which reproduces the hinge exactly.
  const auto betas = cs.slack_weights();
  std::vector<double> cap(k);
  for (int j = 0; j < k; ++j) cap[j] = std::min(betas[j], 1e18);
  const double mu = 64.0;
  std::vector<double> y(k, 0.0);
  auto working = [&](int j, double shortfall) {
    return std::min(std::max(y[j] + mu * shortfall, 0.0), cap[j]);
  };

  // KL(p || q) plus the proximally smoothed constraint terms
  // w*(b - v) - (w - y)^2 / (2 mu) at w = clamp(y + mu (b - v), 0, cap);
  // smooth, convex, and C1 in p, with d/dv = -w.
  auto objective = [&](const std::vector<double>& probs, const std::vector<double>& logits,
                       const std::vector<double>& lse, const std::vector<double>& vals) {
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < m; ++l) {
        const double pv = probs[i * m + l];
        if (pv > 0.0) kl += pv * ((logits[i * m + l] - lse[i]) - q_log[i * m + l]);
      }
    double smoothed = 0.0;
    for (int j = 0; j < k; ++j) {
      const double shortfall = bounds[j] - vals[j];
      const double w = working(j, shortfall);
      smoothed += w * shortfall - (w - y[j]) * (w - y[j]) / (2.0 * mu);
    }
    return kl + smoothed;
  };

  const int rounds = 24;
  const long inner = std::max<long>(1, iters / rounds);
  std::vector<double> grad(count), s_cand(count), p_cand(count), lse_cand(n), values_cand(k);

  for (int round = 0; round < rounds; ++round) {
    double current = objective(p, s, p_lse, values);
    // fresh step size each round: the previous round ends with eta ground
    // down to the sub-ulp scale of its own converged problem, from which
    // the doubling recovery cannot climb back once the multiplier update
    // creates a new macroscopic gradient
    double eta = 0.5;
    int stalled = 0;
    for (long it = 0; it < inner && stalled < 3; ++it) {
      // dJ/dp with the row-constant terms dropped (normalization removes them)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < m; ++l)
          grad[i * m + l] = (s[i * m + l] - p_lse[i]) - q_log[i * m + l];
      for (int j = 0; j < k; ++j) {
        const double w = working(j, bounds[j] - values[j]);
        if (w == 0.0) continue;
        for (const auto& c : cs.row(j).coefficients)
          grad[static_cast<std::size_t>(c.pixel) * m + c.label] -= w * c.value;
      }

      bool accepted = false;
      const double before = current;
      for (int halving = 0; halving < 60; ++halving) {
        for (std::size_t e = 0; e < count; ++e) s_cand[e] = s[e] - eta * grad[e];
        refresh(s_cand, p_cand, lse_cand, values_cand);
        const double cand = objective(p_cand, s_cand, lse_cand, values_cand);
        if (cand <= current) {
          current = cand;
          s.swap(s_cand);
          p.swap(p_cand);
          p_lse.swap(lse_cand);
          values.swap(values_cand);
          accepted = true;
          break;
        }
        eta *= 0.5;
      }
      if (accepted) eta = std::min(eta * 2.0, 1.0);
      // once this round's problem is solved to rounding accuracy, spending
      // the rest of the budget only grinds eta into the noise floor
      stalled = before - current <= 1e-16 * (1.0 + std::abs(before)) ? stalled + 1 : 0;
    }
    for (int j = 0; j < k; ++j) y[j] = working(j, bounds[j] - values[j]);
  }

  return LabelDistribution(ni, mi, std::move(p));
}

}  // namespace ccnn::oracle
