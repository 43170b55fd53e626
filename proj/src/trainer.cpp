#include "ccnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ccnn/distributions.hpp"
#include "ccnn/loss.hpp"

namespace ccnn {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::ccnn_full: return "ccnn_full";
    case TrainMode::em_adapt_like: return "em_adapt_like";
    case TrainMode::tags_only_mil: return "tags_only_mil";
    case TrainMode::fully_supervised: return "fully_supervised";
  }
  throw std::logic_error("unknown TrainMode");
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "ccnn_full") return TrainMode::ccnn_full;
  if (name == "em_adapt_like") return TrainMode::em_adapt_like;
  if (name == "tags_only_mil") return TrainMode::tags_only_mil;
  if (name == "fully_supervised") return TrainMode::fully_supervised;
  throw std::invalid_argument("unknown train mode: " + name);
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("TrainConfig: learning_rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw std::invalid_argument("TrainConfig: lr_decay_factor must be in (0, 1]");
  if (lr_decay_every < 1) throw std::invalid_argument("TrainConfig: lr_decay_every must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
  if (!(supervised_fraction >= 0.0 && supervised_fraction <= 1.0))
    throw std::invalid_argument("TrainConfig: supervised_fraction must be in [0, 1]");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  solver.validate();
  constraint_cfg.validate();
}

BuildResult build_constraints(const SynthExample& example, TrainMode mode,
                              const ConstraintConfig& cfg) {
  const int n = example.features.pixels();
  const int m = example.features.channels;

  std::vector<ConstraintRow> rows;
  bool omitted = false;

  switch (mode) {
    case TrainMode::fully_supervised:
      break;  // latent P is the ground-truth delta; no rows

    case TrainMode::tags_only_mil: {
      auto sup = suppression_rows(example.tags, cfg, n, m);
      rows.insert(rows.end(), sup.begin(), sup.end());
      auto fg = foreground_rows(example.tags, /*large_labels=*/{}, cfg, n, m);
      for (auto& row : fg) row.bound = 1.0;  // at least one pixel per tag
      rows.insert(rows.end(), fg.begin(), fg.end());
      break;
    }

    case TrainMode::em_adapt_like: {
      auto sup = suppression_rows(example.tags, cfg, n, m);
      rows.insert(rows.end(), sup.begin(), sup.end());
      auto fg = foreground_rows(example.tags, /*large_labels=*/{}, cfg, n, m);
      rows.insert(rows.end(), fg.begin(), fg.end());
      break;
    }

    case TrainMode::ccnn_full: {
      std::set<int> large, small;
      if (example.has_size_bits) {
        for (const auto& [tag, big] : example.size_bits) (big ? large : small).insert(tag);
      } else {
        omitted = true;  // no size information: no boost, no caps
      }
      auto sup = suppression_rows(example.tags, cfg, n, m);
      rows.insert(rows.end(), sup.begin(), sup.end());
      auto fg = foreground_rows(example.tags, large, cfg, n, m);
      rows.insert(rows.end(), fg.begin(), fg.end());
      auto bg = background_rows(cfg, n, m);
      rows.insert(rows.end(), bg.begin(), bg.end());
      if (example.has_size_bits) {
        auto sz = size_rows(small, large, cfg, n, m);
        rows.insert(rows.end(), sz.begin(), sz.end());
      }
      break;
    }
  }

  return BuildResult{ConstraintSet::assemble(std::move(rows), n, m), omitted};
}

namespace {

double decayed_lr(const TrainConfig& cfg, int step) {
  const int stages = step / cfg.lr_decay_every;
  return cfg.learning_rate * std::pow(cfg.lr_decay_factor, stages);
}

double single_iou(const std::vector<int>& pred, const std::vector<int>& gt, int m) {
  return mean_iou({pred}, {gt}, m).mean;
}

}  // namespace

bool train_step(Scorer& scorer, TrainState& state, const SynthExample& example,
                const TrainConfig& config, bool supervised) {
  const int m = example.features.channels;
  const ScoreMatrix scores = scorer.forward(example.features);
  const LabelDistribution q = softmax(scores);

  supervised = supervised || config.mode == TrainMode::fully_supervised;

  double violation = 0.0;
  LabelDistribution p = q;  // replaced below
  if (supervised) {
    p = LabelDistribution::delta(example.mask, m);
  } else {
    BuildResult built = build_constraints(example, config.mode, config.constraint_cfg);
    state.size_rows_omitted = state.size_rows_omitted || built.size_rows_omitted;
    const ConstraintSet& cs = built.set;

    std::span<const double> warm;
    if (auto it = state.lambda_cache.find(example.id);
        it != state.lambda_cache.end() && static_cast<int>(it->second.size()) == cs.size())
      warm = it->second;
    SolveResult solved = solve(scores, cs, config.solver, warm);
    state.lambda_cache[example.id] = solved.state.lambda;
    p = std::move(solved.p);

    if (!cs.empty()) {
      const auto q_values = cs.values(q);
      const auto bounds = cs.bounds();
      double total = 0.0;
      for (int j = 0; j < cs.size(); ++j) total += std::max(0.0, bounds[j] - q_values[j]);
      violation = total / cs.size();
    }
  }

  const double loss = cross_entropy(p, q);
  const double kl = kl_divergence(p, q);
  if (!std::isfinite(loss) || !std::isfinite(kl)) {
    state.aborted = true;
    state.abort_reason = "non-finite loss at step " + std::to_string(state.step + 1);
    return false;
  }

  const ScoreMatrix grad_scores = score_gradient(p, q);
  const std::vector<double> grad = scorer.backward(grad_scores);

  const double lr = decayed_lr(config, state.step);
  if (state.velocity.size() != grad.size()) state.velocity.assign(grad.size(), 0.0);
  std::vector<double> params = scorer.parameters();
  for (std::size_t j = 0; j < grad.size(); ++j) {
    state.velocity[j] = config.momentum * state.velocity[j] - lr * grad[j];
    params[j] += state.velocity[j];
  }
  scorer.set_parameters(params);
  state.parameters = std::move(params);
  ++state.step;

  StepMetrics row;
  row.step = state.step;
  row.loss = loss;
  row.kl = kl;
  row.violation = violation;
  row.iou_train = single_iou(predict_mask(q), example.mask, m);
  state.metrics.push_back(row);
  return true;
}

double evaluate_iou(Scorer& scorer, const std::vector<SynthExample>& examples) {
  if (examples.empty()) throw std::invalid_argument("evaluate_iou: empty example set");
  std::vector<std::vector<int>> preds, gts;
  preds.reserve(examples.size());
  gts.reserve(examples.size());
  const int m = examples.front().features.channels;
  for (const auto& ex : examples) {
    const ScoreMatrix scores = scorer.forward(ex.features);
    preds.push_back(predict_mask(softmax(scores)));
    gts.push_back(ex.mask);
  }
  return mean_iou(preds, gts, m).mean;
}

TrainState train(Scorer& scorer, const std::vector<SynthExample>& dataset,
                 const TrainConfig& config, const std::vector<SynthExample>* validation) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset must be nonempty");

  TrainState state;
  state.parameters = scorer.parameters();
  state.velocity.assign(scorer.parameter_count(), 0.0);

  std::mt19937 rng(config.seed);

  // the supervised subset is fixed up front: the first ceil(fraction * N)
  // entries of a seeded permutation
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<char> supervised(dataset.size(), 0);
  {
    std::vector<int> perm = order;
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto count = static_cast<std::size_t>(
        std::ceil(config.supervised_fraction * static_cast<double>(dataset.size())));
    for (std::size_t i = 0; i < count && i < perm.size(); ++i) supervised[perm[i]] = 1;
  }

  bool done = config.max_steps == 0;
  while (!done) {
    std::shuffle(order.begin(), order.end(), rng);  // one epoch
    for (int idx : order) {
      if (!train_step(scorer, state, dataset[idx], config, supervised[idx] != 0)) {
        done = true;
        break;
      }
      if (validation && !validation->empty() &&
          (state.step % config.eval_every == 0 || state.step == config.max_steps)) {
        state.metrics.back().iou_val = evaluate_iou(scorer, *validation);
        state.metrics.back().has_val = true;
      }
      if (state.step >= config.max_steps) {
        done = true;
        break;
      }
    }
  }
  return state;
}

void write_metrics_csv(const std::vector<StepMetrics>& metrics, std::ostream& out) {
  out << "step,loss,kl,violation,iou_train,iou_val\n";
  char buf[128];
  for (const auto& row : metrics) {
    if (row.has_val) {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", row.step, row.loss,
                    row.kl, row.violation, row.iou_train, row.iou_val);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,\n", row.step, row.loss, row.kl,
                    row.violation, row.iou_train);
    }
    out << buf;
  }
}

void write_metrics_csv(const std::vector<StepMetrics>& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  write_metrics_csv(metrics, out);
  if (!out) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

}  // namespace ccnn
