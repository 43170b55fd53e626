#include "ccnn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "ccnn/distributions.hpp"
#include "ccnn/dual_solver.hpp"
#include "ccnn/kernels.hpp"
#include "ccnn/loss.hpp"
#include "ccnn/oracle.hpp"
#include "ccnn/scorer.hpp"
#include "ccnn/serialize.hpp"
#include "ccnn/synthdata.hpp"
#include "ccnn/trainer.hpp"

namespace ccnn {

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kInputError = 2;

// ---------------------------------------------------------------- solve

struct SolveArgs {
  std::string instance_file;
  std::string out_path;
  bool check = false;
  double check_tol = 1e-6;
  int max_iters = 50;
  double tolerance = 1e-6;
  unsigned seed = 0;  // accepted for interface uniformity; solve is seedless
};

int run_solve(const SolveArgs& a) {
  const json doc = load_json_file(a.instance_file);
  const Instance instance = instance_from_json(doc);
  const auto cs =
      ConstraintSet::assemble(instance.rows, instance.scores.pixels(), instance.scores.labels());

  SolverConfig config;
  config.max_iters = a.max_iters;
  config.tolerance = a.tolerance;
  config.validate();

  const SolveResult result = solve(instance.scores, cs, config);
  json out = solve_result_to_json(result, instance.scores, cs, config);

  int code = kOk;
  if (a.check) {
    json check;
    double kl_gap = 0.0;
    if (cs.empty()) {
      check["oracle"] = "softmax";
      kl_gap = kl_divergence(result.p, softmax(instance.scores));
    } else if (cs.size() == 1) {
      check["oracle"] = "bisection";
      const auto ref = oracle::bisection_oracle(instance.scores, cs.row(0));
      kl_gap = kl_divergence(result.p, ref.p);
      check["oracle_lambda"] = ref.lambda;
      check["dual_gap"] = std::abs(dual_value(result.state.lambda, instance.scores, cs) -
                                   dual_value(ref.lambda, instance.scores, cs));
    } else if (cs.size() == 2) {
      check["oracle"] = "grid";
      const auto ref = oracle::grid_oracle(instance.scores, cs, 300);
      kl_gap = kl_divergence(result.p, ref.p);
      check["oracle_lambda"] = ref.lambda;
      check["dual_gap"] = std::abs(dual_value(result.state.lambda, instance.scores, cs) -
                                   dual_value(ref.lambda, instance.scores, cs));
    } else {
      check["oracle"] = "primal_descent";  // requires a satisfiable instance
      const auto ref = oracle::primal_descent_oracle(instance.scores, cs);
      kl_gap = kl_divergence(result.p, ref);
    }
    check["kl_gap"] = kl_gap;
    check["ok"] = kl_gap <= a.check_tol;
    out["check"] = std::move(check);
    if (kl_gap > a.check_tol) code = kCheckFailure;
  }

  if (a.out_path.empty())
    std::cout << out.dump(2) << '\n';
  else
    write_json_file(out, a.out_path);
  return code;
}

// ---------------------------------------------------------------- train

struct DatasetSpec {
  int count = 200;
  int val_count = 50;
  int grid_side = 16;
  int m = 4;
  double noise_std = 0.5;
  unsigned seed = 7;
};

struct ScorerSpec {
  std::string type = "linear";  // linear | conv
  int channels = 0;             // conv hidden channels
  int kernel_size = 3;
  unsigned seed = 0;
  bool seed_given = false;
};

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec d;
  d.count = j.value("count", d.count);
  d.val_count = j.value("val_count", d.val_count);
  d.grid_side = j.value("grid_side", d.grid_side);
  d.m = j.value("m", d.m);
  d.noise_std = j.value("noise_std", d.noise_std);
  d.seed = j.value("seed", d.seed);
  if (d.count < 1 || d.val_count < 0) throw std::invalid_argument("dataset: bad example counts");
  return d;
}

json dataset_spec_to_json(const DatasetSpec& d) {
  return json{{"count", d.count},       {"val_count", d.val_count}, {"grid_side", d.grid_side},
              {"m", d.m},               {"noise_std", d.noise_std}, {"seed", d.seed}};
}

ScorerSpec scorer_spec_from_json(const json& j) {
  ScorerSpec s;
  s.type = j.value("type", s.type);
  s.channels = j.value("channels", s.channels);
  s.kernel_size = j.value("kernel_size", s.kernel_size);
  if (j.contains("seed")) {
    s.seed = j.at("seed").get<unsigned>();
    s.seed_given = true;
  }
  if (s.type != "linear" && s.type != "conv")
    throw std::invalid_argument("scorer: type must be linear or conv");
  return s;
}

json scorer_spec_to_json(const ScorerSpec& s, unsigned resolved_seed) {
  json j{{"type", s.type}, {"seed", resolved_seed}};
  if (s.type == "conv") {
    j["channels"] = s.channels;
    j["kernel_size"] = s.kernel_size;
  }
  return j;
}

std::unique_ptr<Scorer> make_scorer(const ScorerSpec& s, int m, unsigned resolved_seed) {
  if (s.type == "conv") return conv_scorer(s.channels, s.kernel_size, m, resolved_seed);
  return linear_scorer(m, m, resolved_seed);  // synthetic features carry d = m channels
}

struct TrainOutcome {
  TrainState state;
  double final_train_iou = 0.0;
  double final_val_iou = -1.0;  // -1 when no validation set
  unsigned scorer_seed = 0;
  std::unique_ptr<Scorer> scorer;
};

TrainOutcome run_training(const TrainConfig& cfg, const DatasetSpec& dspec,
                          const ScorerSpec& sspec) {
  cfg.validate();
  const auto all = generate(dspec.count + dspec.val_count, dspec.grid_side, dspec.m,
                            dspec.noise_std, dspec.seed);
  const std::vector<SynthExample> train_set(all.begin(), all.begin() + dspec.count);
  const std::vector<SynthExample> val_set(all.begin() + dspec.count, all.end());

  TrainOutcome outcome;
  outcome.scorer_seed = sspec.seed_given ? sspec.seed : cfg.seed;
  outcome.scorer = make_scorer(sspec, dspec.m, outcome.scorer_seed);

  outcome.state = train(*outcome.scorer, train_set, cfg, val_set.empty() ? nullptr : &val_set);
  outcome.final_train_iou = evaluate_iou(*outcome.scorer, train_set);
  if (!val_set.empty()) outcome.final_val_iou = evaluate_iou(*outcome.scorer, val_set);
  return outcome;
}

struct TrainArgs {
  std::string config_file;
  std::string out_dir = ".";
  unsigned seed = 0;
  bool seed_given = false;
};

int run_train(const TrainArgs& a) {
  const json doc = load_json_file(a.config_file);
  TrainConfig cfg = train_config_from_json(doc);
  if (a.seed_given) cfg.seed = a.seed;
  const DatasetSpec dspec =
      doc.contains("dataset") ? dataset_spec_from_json(doc.at("dataset")) : DatasetSpec{};
  const ScorerSpec sspec =
      doc.contains("scorer") ? scorer_spec_from_json(doc.at("scorer")) : ScorerSpec{};
  cfg.validate();

  std::filesystem::create_directories(a.out_dir);
  const auto outpath = [&](const char* name) {
    return (std::filesystem::path(a.out_dir) / name).string();
  };

  const TrainOutcome outcome = run_training(cfg, dspec, sspec);
  write_metrics_csv(outcome.state.metrics, outpath("metrics.csv"));
  save_parameters(*outcome.scorer, outpath("checkpoint.bin"));

  json summary;
  summary["steps"] = outcome.state.step;
  summary["aborted"] = outcome.state.aborted;
  if (outcome.state.aborted) summary["abort_reason"] = outcome.state.abort_reason;
  summary["size_rows_omitted"] = outcome.state.size_rows_omitted;
  summary["final_train_iou"] = outcome.final_train_iou;
  if (outcome.final_val_iou >= 0.0) summary["final_val_iou"] = outcome.final_val_iou;
  summary["config"] = train_config_to_json(cfg);
  summary["dataset"] = dataset_spec_to_json(dspec);
  summary["scorer"] = scorer_spec_to_json(sspec, outcome.scorer_seed);
  write_json_file(summary, outpath("summary.json"));
  std::cout << summary.dump(2) << '\n';
  return outcome.state.aborted ? kCheckFailure : kOk;
}

// ---------------------------------------------------------------- sweep

const std::map<std::string, std::vector<double>>& default_sweep_values() {
  static const std::map<std::string, std::vector<double>> values{
      {"a_fg", {0.01, 0.03, 0.05, 0.07, 0.10}},
      {"a_bg", {0.1, 0.2, 0.3, 0.4, 0.5}},
      {"b_bg", {0.5, 0.6, 0.7, 0.8}},
      {"b_small", {0.005, 0.01, 0.02, 0.05}},
  };
  return values;
}

void set_bound_param(ConstraintConfig& cfg, const std::string& name, double value) {
  if (name == "a_fg")
    cfg.a_fg = value;
  else if (name == "a_bg")
    cfg.a_bg = value;
  else if (name == "b_bg")
    cfg.b_bg = value;
  else if (name == "b_small")
    cfg.b_small = value;
  else
    throw std::invalid_argument("unknown sweep parameter: " + name);
}

struct SweepArgs {
  std::string config_file;
  std::string param = "all";
  std::vector<double> values;  // empty selects the per-param defaults
  int seeds = 3;
  std::string out_path;      // CSV; empty = stdout
  std::string summary_path;  // JSON; optional
  unsigned seed = 0;
  bool seed_given = false;
};

struct SweepCell {
  std::string param;
  double value = 0.0;
  int seed_index = 0;
  double iou = 0.0;
  bool failed = false;
  std::string error;
};

int run_sweep(const SweepArgs& a) {
  if (a.seeds < 1) throw std::invalid_argument("sweep: --seeds must be >= 1");
  const json doc = load_json_file(a.config_file);
  TrainConfig base_cfg = train_config_from_json(doc);
  if (a.seed_given) base_cfg.seed = a.seed;
  const DatasetSpec dspec =
      doc.contains("dataset") ? dataset_spec_from_json(doc.at("dataset")) : DatasetSpec{};
  const ScorerSpec sspec =
      doc.contains("scorer") ? scorer_spec_from_json(doc.at("scorer")) : ScorerSpec{};
  base_cfg.validate();

  std::vector<std::string> params;
  if (a.param == "all") {
    for (const auto& [name, _] : default_sweep_values()) params.push_back(name);
  } else {
    if (!default_sweep_values().count(a.param))
      throw std::invalid_argument("unknown sweep parameter: " + a.param);
    params.push_back(a.param);
  }

  std::vector<SweepCell> cells;
  for (const auto& param : params) {
    const auto& values = a.values.empty() ? default_sweep_values().at(param) : a.values;
    for (double value : values)
      for (int s = 0; s < a.seeds; ++s)
        cells.push_back(SweepCell{param, value, s, 0.0, false, {}});
  }

  // independent training runs; CCNN_THREADS caps the cell parallelism
  kernels::for_rows(cells.size(), kernels::Exec::Parallel, [&](std::size_t idx) {
    SweepCell& cell = cells[idx];
    try {
      TrainConfig cfg = base_cfg;
      set_bound_param(cfg.constraint_cfg, cell.param, cell.value);
      cfg.seed = base_cfg.seed + static_cast<unsigned>(cell.seed_index);
      const TrainOutcome outcome = run_training(cfg, dspec, sspec);
      if (outcome.state.aborted) throw std::runtime_error(outcome.state.abort_reason);
      cell.iou = outcome.final_val_iou >= 0.0 ? outcome.final_val_iou : outcome.final_train_iou;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  });

  // aggregate: per (param, value) mean/std over seeds; per param the std
  // across line-search values of the per-value means; averaged over params
  std::ostringstream csv;
  csv << "param,value,mean_iou,std_iou,runs\n";
  char buf[160];
  int failed_runs = 0;
  std::map<std::string, std::vector<double>> value_means;
  for (const auto& param : params) {
    const auto& values = a.values.empty() ? default_sweep_values().at(param) : a.values;
    for (double value : values) {
      std::vector<double> ious;
      for (const auto& cell : cells)
        if (cell.param == param && cell.value == value) {
          if (cell.failed) {
            ++failed_runs;
            std::cerr << "sweep cell failed (" << param << "=" << value << ", seed index "
                      << cell.seed_index << "): " << cell.error << '\n';
          } else {
            ious.push_back(cell.iou);
          }
        }
      double mean = 0.0, sd = 0.0;
      if (!ious.empty()) {
        for (double v : ious) mean += v;
        mean /= static_cast<double>(ious.size());
        for (double v : ious) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / static_cast<double>(ious.size()));
        value_means[param].push_back(mean);
      }
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%zu\n", param.c_str(), value, mean, sd,
                    ious.size());
      csv << buf;
    }
  }

  json summary;
  summary["failed_runs"] = failed_runs;
  double avg_std = 0.0;
  int counted = 0;
  for (const auto& [param, means] : value_means) {
    double mean = 0.0, sd = 0.0;
    for (double v : means) mean += v;
    mean /= static_cast<double>(means.size());
    for (double v : means) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / static_cast<double>(means.size()));
    summary["per_param_value_std"][param] = sd;
    avg_std += sd;
    ++counted;
  }
  summary["averaged_iou_std"] = counted > 0 ? avg_std / counted : 0.0;
  summary["config"] = train_config_to_json(base_cfg);
  summary["dataset"] = dataset_spec_to_json(dspec);
  summary["seeds"] = a.seeds;

  if (a.out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(a.out_path);
    if (!out) throw std::runtime_error("cannot open " + a.out_path);
    out << csv.str();
  }
  if (!a.summary_path.empty()) write_json_file(summary, a.summary_path);
  std::cout << "averaged_iou_std " << summary["averaged_iou_std"].get<double>() << '\n';
  return failed_runs == 0 ? kOk : kCheckFailure;
}

// ------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  double h = 1e-5;
  int probes = 20;
  double threshold_linear = 1e-4;
  double threshold_conv = 1e-4;
  double threshold_dual = 1e-6;
  unsigned seed = 42;
  bool corrupt_backward = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.h <= 0.0) throw std::invalid_argument("gradcheck: --h must be positive");
  std::mt19937 rng(a.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  bool ok = true;
  char line[160];

  auto report = [&](const char* name, double err, double threshold) {
    const bool pass = err <= threshold;
    ok = ok && pass;
    std::snprintf(line, sizeof(line), "%-16s rel_error=%.3e threshold=%.3e %s\n", name, err,
                  threshold, pass ? "ok" : "FAIL");
    std::cout << line;
  };

  {
    auto scorer = linear_scorer(4, 3, a.seed);
    if (a.corrupt_backward) scorer = with_sign_flipped_backward(std::move(scorer));
    std::vector<double> feats(25 * 4);
    for (auto& v : feats) v = gauss(rng);
    const auto grid = FeatureGrid::flat(25, 4, std::move(feats));
    report("linear_scorer", gradient_check(*scorer, grid, a.probes, a.h, a.seed + 1),
           a.threshold_linear);
  }

  {
    auto scorer = conv_scorer(5, 3, 3, a.seed);
    if (a.corrupt_backward) scorer = with_sign_flipped_backward(std::move(scorer));
    std::vector<double> feats(6 * 6 * 3);
    for (auto& v : feats) v = gauss(rng);
    const auto grid = FeatureGrid(6, 6, 3, std::move(feats));
    report("conv_scorer", gradient_check(*scorer, grid, a.probes, a.h, a.seed + 2),
           a.threshold_conv);
  }

  {
    // dual gradient vs central differences at a random interior lambda
    const int n = 6, m = 3;
    std::vector<double> scores(static_cast<std::size_t>(n) * m);
    for (auto& v : scores) v = gauss(rng);
    const ScoreMatrix f(n, m, std::move(scores));
    std::vector<ConstraintRow> rows;
    for (int j = 0; j < 2; ++j) {
      ConstraintRow row;
      const int label = 1 + j;
      for (int i = 0; i < n; ++i) row.coefficients.push_back({i, label, 1.0});
      row.bound = 0.3 * n;
      row.slack_weight = 50.0;
      rows.push_back(std::move(row));
    }
    const auto cs = ConstraintSet::assemble(rows, n, m);
    std::vector<double> lambda{0.4, 0.7};
    const auto analytic = dual_gradient(lambda, f, cs);
    double worst = 0.0;
    for (std::size_t j = 0; j < lambda.size(); ++j) {
      auto lp = lambda, lm = lambda;
      lp[j] += a.h;
      lm[j] -= a.h;
      const double numeric = (dual_value(lp, f, cs) - dual_value(lm, f, cs)) / (2.0 * a.h);
      const double denom = std::max(std::abs(analytic[j]), std::abs(numeric));
      if (denom > 1e-12) worst = std::max(worst, std::abs(analytic[j] - numeric) / denom);
    }
    report("dual_gradient", worst, a.threshold_dual);
  }

  return ok ? kOk : kCheckFailure;
}

}  // namespace

int cli_main(std::vector<std::string> args) {
  CLI::App app{"constrained-output training toolkit"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  auto* solve_cmd = app.add_subcommand(
      "solve", "project scores onto the constraint polytope (KL-closest latent distribution)");
  solve_cmd->add_option("instance", solve_args.instance_file, "instance JSON file")->required();
  solve_cmd->add_option("--out", solve_args.out_path, "write result JSON here instead of stdout");
  solve_cmd->add_flag("--check", solve_args.check, "cross-check against an independent oracle");
  solve_cmd->add_option("--check-tol", solve_args.check_tol, "KL gap tolerance for --check");
  solve_cmd->add_option("--max-iters", solve_args.max_iters, "ascent iteration budget");
  solve_cmd->add_option("--tolerance", solve_args.tolerance, "stopping residual");
  solve_cmd->add_option("--seed", solve_args.seed, "unused; accepted for uniformity");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "run a training experiment from a config JSON");
  train_cmd->add_option("config", train_args.config_file, "config JSON file")->required();
  train_cmd->add_option("--out-dir", train_args.out_dir,
                        "directory for metrics.csv, summary.json, checkpoint.bin");
  train_cmd->add_option("--seed", train_args.seed, "override the config seed")
      ->each([&](const std::string&) { train_args.seed_given = true; });

  SweepArgs sweep_args;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "line-search a constraint bound parameter across seeds");
  sweep_cmd->add_option("config", sweep_args.config_file, "base config JSON file")->required();
  sweep_cmd->add_option("--param", sweep_args.param, "a_fg, a_bg, b_bg, b_small, or all");
  sweep_cmd->add_option("--values", sweep_args.values, "explicit line-search values");
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "seeds per value");
  sweep_cmd->add_option("--out", sweep_args.out_path, "CSV output path (default stdout)");
  sweep_cmd->add_option("--summary", sweep_args.summary_path, "summary JSON path");
  sweep_cmd->add_option("--seed", sweep_args.seed, "override the config base seed")
      ->each([&](const std::string&) { sweep_args.seed_given = true; });

  GradcheckArgs grad_args;
  auto* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference checks of scorer and dual gradients");
  grad_cmd->set_help_flag("--help", "print help");  // frees -h for the step flag
  grad_cmd->add_option("--h", grad_args.h, "finite-difference step");
  grad_cmd->add_option("--probes", grad_args.probes, "parameters probed per scorer");
  grad_cmd->add_option("--threshold-linear", grad_args.threshold_linear);
  grad_cmd->add_option("--threshold-conv", grad_args.threshold_conv);
  grad_cmd->add_option("--threshold-dual", grad_args.threshold_dual);
  grad_cmd->add_option("--seed", grad_args.seed, "probe RNG seed");
  grad_cmd->add_flag("--corrupt-backward", grad_args.corrupt_backward,
                     "negative control: sign-flip the backward pass");

  std::vector<const char*> argv;
  argv.push_back("ccnn");
  for (const auto& s : args) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (solve_cmd->parsed()) return run_solve(solve_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (sweep_cmd->parsed()) return run_sweep(sweep_args);
    if (grad_cmd->parsed()) return run_gradcheck(grad_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;  // unreachable with require_subcommand(1)
}

}  // namespace ccnn
