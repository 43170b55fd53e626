// Acceptance gate for the constrained-output training stack. Each numbered
// criterion prints exactly one PASS/FAIL line with the measured quantities;
// the process exits 0 only when every criterion holds, 1 when any check
// fails, 2 on an unexpected error. All tolerances are pinned right here,
// next to the checks that enforce them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccnn/cli.hpp"
#include "ccnn/constraints.hpp"
#include "ccnn/distributions.hpp"
#include "ccnn/dual_solver.hpp"
#include "ccnn/kernels.hpp"
#include "ccnn/loss.hpp"
#include "ccnn/oracle.hpp"
#include "ccnn/scorer.hpp"
#include "ccnn/serialize.hpp"
#include "ccnn/synthdata.hpp"
#include "ccnn/trainer.hpp"
#include "fixtures/benchmark_baseline.hpp"
#include "suite.hpp"

namespace {

using namespace ccnn;
namespace fs = std::filesystem;

// ------------------------------------------------------------ tolerances
constexpr double kKlGapTol = 1e-6;        // 1: KL(P_solver || P_oracle)
constexpr double kDualGapTol = 1e-6;      // 1: |dual value difference|
constexpr double kSuiteSecondsBudget = 5.0;
constexpr int kMedianIterBudget = 50;     // 2
constexpr double kIterGoal = 1e-6;        // 2: residual the iterations reach
constexpr double kDualFdTol = 1e-6;       // 5: dual gradient vs central FD
constexpr double kScorerFdTol = 1e-4;     // 5: scorer backward vs central FD
constexpr double kPrimalDualTol = 1e-6;   // 6: primal value vs dual optimum
constexpr double kHardFeasTol = 1e-8;     // 6: hard rows must be satisfied
constexpr double kBenchSecondsBudget = 600.0;  // 7
constexpr int kGridResolution = 300;      // 1: grid oracle points per axis
constexpr long kPrimalOracleIters = 150000;  // 1: mirror-descent budget

int failures = 0;

std::string strf(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

void report(int index, const char* name, bool ok, const std::string& detail) {
  std::printf("%s  criterion %2d  %-24s %s\n", ok ? "PASS" : "FAIL", index, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fixture(const char* name) {
  return std::string(CCNN_FIXTURE_DIR) + "/" + name;
}

double total_lse(const ScoreMatrix& scores) {
  double sum = 0.0;
  for (int i = 0; i < scores.pixels(); ++i)
    sum += log_sum_exp(std::span<const double>(scores.data() + i * scores.labels(),
                                               static_cast<std::size_t>(scores.labels())));
  return sum;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --------------------------------------------------- criteria 1, 2, 3, 4, 6
// One pass over the 100-instance suite feeds all the solver-side criteria:
// oracle equivalence (1), the cold-start iteration budget (2), box exactness
// of every iterate (3), dual monotonicity (4), and the zero-duality-gap
// identity at the returned factorized distribution (6).
struct SuitePass {
  double worst_kl = 0.0;
  double worst_dual_gap = 0.0;
  double seconds = 0.0;
  double median_iters = 0.0;
  int over_budget = 0;   // instances needing more than kMedianIterBudget
  bool box_exact = true;
  bool monotone = true;
  double worst_primal_gap = 0.0;
  double worst_hard_shortfall = 0.0;
  int count = 0;
};

SuitePass run_suite_pass() {
  SuitePass out;
  std::vector<int> iters_needed;

  SolverConfig config;
  config.max_iters = 3000;
  config.tolerance = 1e-8;  // well below every acceptance tolerance

  const auto t0 = std::chrono::steady_clock::now();
  for (const unsigned seed : testsupport::suite_seeds()) {
    const auto inst = testsupport::make_suite_instance(seed);
    const auto& cs = inst.constraints;
    const SolveResult result = solve(inst.scores, cs, config);
    ++out.count;

    // criterion 2: first iterate whose residual reaches the training-grade
    // tolerance; residuals[0] is the cold-start point (zero iterations)
    int first = config.max_iters;
    for (std::size_t t = 0; t < result.state.residuals.size(); ++t)
      if (result.state.residuals[t] <= kIterGoal) {
        first = static_cast<int>(t);
        break;
      }
    iters_needed.push_back(first);
    if (first > kMedianIterBudget) ++out.over_budget;

    // criterion 3: every iterate inside [0, min(beta, cap)], exactly
    const auto betas = cs.slack_weights();
    for (const auto& lam : result.state.lambda_trace)
      for (std::size_t j = 0; j < lam.size(); ++j) {
        const double upper = std::min(betas[j], config.lambda_cap);
        if (!(lam[j] >= 0.0 && lam[j] <= upper)) out.box_exact = false;
      }

    // criterion 4: accepted dual values never decrease
    for (std::size_t t = 1; t < result.state.dual_values.size(); ++t)
      if (result.state.dual_values[t] < result.state.dual_values[t - 1]) out.monotone = false;

    // criterion 1: agreement with the kind-matched independent oracle
    const LabelDistribution q = softmax(inst.scores, kernels::Exec::Serial);
    const double dual_solver = dual_value(result.state.lambda, inst.scores, cs);
    double kl_gap = 0.0;
    double dual_gap = 0.0;
    switch (inst.kind) {
      case testsupport::OracleKind::softmax: {
        kl_gap = kl_divergence(result.p, q);
        dual_gap = std::abs(dual_solver - dual_value({}, inst.scores, cs));
        break;
      }
      case testsupport::OracleKind::bisection: {
        const auto o = oracle::bisection_oracle(inst.scores, cs.row(0));
        kl_gap = kl_divergence(result.p, o.p);
        dual_gap = std::abs(dual_solver - dual_value(o.lambda, inst.scores, cs));
        break;
      }
      case testsupport::OracleKind::grid: {
        const auto o = oracle::grid_oracle(inst.scores, cs, kGridResolution);
        kl_gap = kl_divergence(result.p, o.p);
        dual_gap = std::abs(dual_solver - dual_value(o.lambda, inst.scores, cs));
        break;
      }
      case testsupport::OracleKind::primal: {
        // the primal oracle returns no multipliers; at a zero duality gap
        // its objective (divergence plus slack hinges) equals the shifted
        // dual optimum instead
        const auto p_oracle = oracle::primal_descent_oracle(inst.scores, cs, kPrimalOracleIters);
        kl_gap = kl_divergence(result.p, p_oracle);
        const auto oracle_values = cs.values(p_oracle);
        double oracle_hinge = 0.0;
        for (int j = 0; j < cs.size(); ++j)
          if (std::isfinite(betas[j]))
            oracle_hinge += betas[j] * std::max(0.0, cs.bounds()[j] - oracle_values[j]);
        dual_gap = std::abs((dual_solver + total_lse(inst.scores)) -
                            (kl_divergence(p_oracle, q) + oracle_hinge));
        break;
      }
    }
    out.worst_kl = std::max(out.worst_kl, kl_gap);
    out.worst_dual_gap = std::max(out.worst_dual_gap, dual_gap);

    // criterion 6: KL(P || Q) plus the slack hinge equals the dual optimum
    // shifted by the reference log-partition; hard rows must be feasible
    const auto values = cs.values(result.p);
    const auto bounds = cs.bounds();
    double hinge = 0.0;
    for (int j = 0; j < cs.size(); ++j) {
      if (std::isfinite(betas[j]))
        hinge += betas[j] * std::max(0.0, bounds[j] - values[j]);
      else
        out.worst_hard_shortfall = std::max(out.worst_hard_shortfall, bounds[j] - values[j]);
    }
    const double primal_value = kl_divergence(result.p, q) + hinge;
    const double dual_total = dual_solver + total_lse(inst.scores);
    out.worst_primal_gap = std::max(out.worst_primal_gap, std::abs(primal_value - dual_total));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::sort(iters_needed.begin(), iters_needed.end());
  const std::size_t n = iters_needed.size();
  out.median_iters = n % 2 == 1 ? iters_needed[n / 2]
                                : 0.5 * (iters_needed[n / 2 - 1] + iters_needed[n / 2]);
  return out;
}

// The box claim also covers the infeasible fixture: the unsatisfiable soft
// row must park its multiplier exactly on the slack bound.
bool infeasible_fixture_saturates(std::string& detail) {
  const Instance fix = instance_from_json(load_json_file(fixture("infeasible_instance.json")));
  const auto cs = ConstraintSet::assemble(fix.rows, fix.scores.pixels(), fix.scores.labels());
  SolverConfig config;
  config.max_iters = 500;
  config.tolerance = 1e-8;
  const SolveResult result = solve(fix.scores, cs, config);
  const double beta = cs.slack_weights()[0];
  detail = strf("lambda=%.17g beta=%.17g converged=%d", result.state.lambda[0], beta,
                result.state.converged ? 1 : 0);
  return result.state.converged && result.state.lambda.size() == 1 &&
         result.state.lambda[0] == beta;
}

// ------------------------------------------------------------- criterion 5
struct GradientErrors {
  double linear = 0.0;
  double conv = 0.0;
  double dual = 0.0;
};

GradientErrors measure_gradient_errors() {
  GradientErrors out;
  std::mt19937 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);

  {
    auto scorer = linear_scorer(4, 3, 42);
    std::vector<double> feats(25 * 4);
    for (auto& v : feats) v = gauss(rng);
    const auto grid = FeatureGrid::flat(25, 4, std::move(feats));
    out.linear = gradient_check(*scorer, grid, 30, 1e-5, 43);
  }
  {
    auto scorer = conv_scorer(5, 3, 3, 42);
    std::vector<double> feats(6 * 6 * 3);
    for (auto& v : feats) v = gauss(rng);
    const auto grid = FeatureGrid(6, 6, 3, std::move(feats));
    out.conv = gradient_check(*scorer, grid, 30, 1e-5, 44);
  }

  // dual gradient vs central differences at interior multipliers, across a
  // spread of suite instances
  const auto seeds = testsupport::suite_seeds();
  for (std::size_t idx = 3; idx < seeds.size(); idx += 7) {
    const auto inst = testsupport::make_suite_instance(seeds[idx]);
    const int k = inst.constraints.size();
    if (k == 0) continue;
    const auto betas = inst.constraints.slack_weights();
    std::vector<double> lambda(k);
    for (int j = 0; j < k; ++j)
      lambda[j] = std::min(0.25 + 0.13 * j, 0.8 * std::min(betas[j], 5.0));
    const auto analytic = dual_gradient(lambda, inst.scores, inst.constraints);
    const double h = 1e-6;
    for (int j = 0; j < k; ++j) {
      auto lp = lambda, lm = lambda;
      lp[j] += h;
      lm[j] -= h;
      const double numeric = (dual_value(lp, inst.scores, inst.constraints) -
                              dual_value(lm, inst.scores, inst.constraints)) /
                             (2.0 * h);
      const double denom = std::max(std::abs(analytic[j]), std::abs(numeric));
      if (denom > 1e-12) out.dual = std::max(out.dual, std::abs(analytic[j] - numeric) / denom);
    }
  }
  return out;
}

// --------------------------------------------------------- criteria 7 and 8
double run_benchmark(TrainMode mode, double supervised_fraction, unsigned dataset_seed,
                     unsigned train_seed, bool& aborted) {
  const auto all = generate(250, 16, 4, 0.5, dataset_seed);
  const std::vector<SynthExample> train_set(all.begin(), all.begin() + 200);
  const std::vector<SynthExample> val_set(all.begin() + 200, all.end());

  auto scorer = linear_scorer(4, 4, train_seed);
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.supervised_fraction = supervised_fraction;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.max_steps = 3000;
  cfg.eval_every = 3000;
  cfg.seed = train_seed;
  // Bound parameters calibrated to the generator's measured scene
  // statistics (background fraction p5..p95 = 0.59..0.95, small-object
  // areas <= 0.098, large-object areas >= 0.102): the bands must contain
  // the true label fractions, or the constrained mode is forced to fight
  // the correct segmentation it is being scored on.
  cfg.constraint_cfg.a_fg = 0.02;
  cfg.constraint_cfg.a_big = 0.10;
  cfg.constraint_cfg.a_bg = 0.50;
  cfg.constraint_cfg.b_bg = 0.99;
  cfg.constraint_cfg.b_small = 0.10;
  const TrainState state = train(*scorer, train_set, cfg, &val_set);
  if (state.aborted) {
    aborted = true;
    return 0.0;
  }
  return evaluate_iou(*scorer, val_set);
}

struct BenchmarkOutcome {
  double ccnn = 0.0;
  double em = 0.0;
  double mil = 0.0;
  double seconds = 0.0;
  bool aborted = false;
};

BenchmarkOutcome run_mode_benchmark() {
  BenchmarkOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const unsigned dataset_seed = 100 + s;
    const unsigned train_seed = 900 + s;
    out.ccnn +=
        run_benchmark(TrainMode::ccnn_full, 0.0, dataset_seed, train_seed, out.aborted) / seeds;
    out.em += run_benchmark(TrainMode::em_adapt_like, 0.0, dataset_seed, train_seed, out.aborted) /
              seeds;
    out.mil += run_benchmark(TrainMode::tags_only_mil, 0.0, dataset_seed, train_seed, out.aborted) /
               seeds;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct TrendOutcome {
  std::vector<double> means;   // one per supervised fraction
  double pooled_std = 0.0;
  bool aborted = false;
};

TrendOutcome run_supervision_trend() {
  TrendOutcome out;
  const std::vector<double> fractions{0.0, 0.25, 0.5, 1.0};
  const int seeds = 3;
  for (double fraction : fractions) {
    std::vector<double> ious;
    for (int t = 0; t < seeds; ++t)
      ious.push_back(
          run_benchmark(TrainMode::ccnn_full, fraction, 40 + t, 500 + t, out.aborted));
    double mean = 0.0;
    for (double v : ious) mean += v / ious.size();
    double var = 0.0;
    for (double v : ious) var += (v - mean) * (v - mean) / (ious.size() - 1);
    out.means.push_back(mean);
    out.pooled_std += var / fractions.size();
  }
  out.pooled_std = std::sqrt(out.pooled_std);
  return out;
}

}  // namespace

int main() {
  try {
    const fs::path work = fs::temp_directory_path() / "ccnn_acceptance_workdir";
    fs::remove_all(work);
    fs::create_directories(work);

    // ---- criteria 1-4 and 6: one pass over the oracle suite
    const SuitePass suite = run_suite_pass();
    report(1, "oracle equivalence",
           suite.worst_kl <= kKlGapTol && suite.worst_dual_gap <= kDualGapTol &&
               suite.seconds < kSuiteSecondsBudget,
           strf("instances=%d worst_kl=%.3e worst_dual_gap=%.3e runtime=%.2fs", suite.count,
                suite.worst_kl, suite.worst_dual_gap, suite.seconds));
    report(2, "iteration budget", suite.median_iters <= kMedianIterBudget,
           strf("median_iters_to_%.0e=%.1f instances_over_%d=%d", kIterGoal, suite.median_iters,
                kMedianIterBudget, suite.over_budget));
    std::string infeasible_detail;
    const bool saturates = infeasible_fixture_saturates(infeasible_detail);
    report(3, "multiplier box", suite.box_exact && saturates,
           strf("all_iterates_in_box=%d %s", suite.box_exact ? 1 : 0, infeasible_detail.c_str()));
    report(4, "dual monotonicity", suite.monotone,
           strf("nondecreasing_traces=%d/%d", suite.monotone ? suite.count : 0, suite.count));

    // ---- criterion 5: gradient fidelity
    const GradientErrors grads = measure_gradient_errors();
    report(5, "gradient fidelity",
           grads.dual <= kDualFdTol && grads.linear <= kScorerFdTol && grads.conv <= kScorerFdTol,
           strf("dual=%.3e linear=%.3e conv=%.3e", grads.dual, grads.linear, grads.conv));

    report(6, "zero duality gap",
           suite.worst_primal_gap <= kPrimalDualTol && suite.worst_hard_shortfall <= kHardFeasTol,
           strf("worst_primal_dual_gap=%.3e worst_hard_shortfall=%.3e", suite.worst_primal_gap,
                suite.worst_hard_shortfall));

    // ---- criterion 7: supervision-mode ordering on the synthetic benchmark
    const BenchmarkOutcome bench = run_mode_benchmark();
    const double margin = bench.ccnn - bench.mil;
    report(7, "mode ordering",
           !bench.aborted && bench.ccnn > bench.em && bench.em > bench.mil &&
               kPinnedIouMargin > 0.0 && margin >= kPinnedIouMargin &&
               bench.seconds < kBenchSecondsBudget,
           strf("ccnn_full=%.4f em_adapt_like=%.4f tags_only_mil=%.4f margin=%.17g pinned=%.17g "
                "runtime=%.1fs",
                bench.ccnn, bench.em, bench.mil, margin, kPinnedIouMargin, bench.seconds));

    // ---- criterion 8: more supervision never hurts (within noise)
    const TrendOutcome trend = run_supervision_trend();
    bool trend_ok = !trend.aborted;
    for (std::size_t i = 1; i < trend.means.size(); ++i)
      if (trend.means[i] < trend.means[i - 1] - trend.pooled_std) trend_ok = false;
    report(8, "supervision trend", trend_ok,
           strf("iou={%.4f, %.4f, %.4f, %.4f} pooled_std=%.4f", trend.means[0], trend.means[1],
                trend.means[2], trend.means[3], trend.pooled_std));

    // ---- criterion 9: bound-parameter robustness sweep
    const std::string sweep_csv = (work / "sweep.csv").string();
    const std::string sweep_summary = (work / "sweep.json").string();
    const int sweep_code = cli_main({"sweep", fixture("sweep_small.json"), "--param", "all",
                                     "--seeds", "2", "--out", sweep_csv, "--summary",
                                     sweep_summary});
    int failed_runs = -1;
    double averaged_std = -1.0;
    if (fs::exists(sweep_summary)) {
      const auto summary = load_json_file(sweep_summary);
      failed_runs = summary.at("failed_runs").get<int>();
      averaged_std = summary.at("averaged_iou_std").get<double>();
    }
    report(9, "robustness sweep",
           sweep_code == 0 && failed_runs == 0 && averaged_std >= 0.0 &&
               std::isfinite(averaged_std),
           strf("exit=%d failed_runs=%d averaged_iou_std=%.6f", sweep_code, failed_runs,
                averaged_std));

    // ---- criterion 10: byte-identical training metrics for a fixed seed
    nlohmann::json train_cfg{
        {"mode", "ccnn_full"},
        {"learning_rate", 0.02},
        {"momentum", 0.9},
        {"max_steps", 120},
        {"eval_every", 40},
        {"seed", 17},
        {"solver", {{"max_iters", 50}, {"tolerance", 1e-6}}},
        {"dataset",
         {{"count", 6}, {"val_count", 2}, {"grid_side", 8}, {"m", 3}, {"noise_std", 0.25},
          {"seed", 9}}},
        {"scorer", {{"type", "linear"}, {"seed", 3}}}};
    const std::string cfg_path = (work / "train_config.json").string();
    write_json_file(train_cfg, cfg_path);
    const fs::path run_a = work / "run_a";
    const fs::path run_b = work / "run_b";
    const int code_a = cli_main({"train", cfg_path, "--out-dir", run_a.string()});
    const int code_b = cli_main({"train", cfg_path, "--out-dir", run_b.string()});
    const std::string metrics_a = slurp((run_a / "metrics.csv").string());
    const std::string metrics_b = slurp((run_b / "metrics.csv").string());
    report(10, "deterministic training",
           code_a == 0 && code_b == 0 && !metrics_a.empty() && metrics_a == metrics_b,
           strf("exit=%d/%d bytes=%zu identical=%d", code_a, code_b, metrics_a.size(),
                metrics_a == metrics_b ? 1 : 0));

    fs::remove_all(work);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance harness error: %s\n", e.what());
    return 2;
  }

  if (failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed\n", failures);
  return 1;
}
