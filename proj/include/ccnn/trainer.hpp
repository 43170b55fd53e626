#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ccnn/constraints.hpp"
#include "ccnn/dual_solver.hpp"
#include "ccnn/scorer.hpp"
#include "ccnn/synthdata.hpp"

namespace ccnn {

/// Supervision regimes. ccnn_full uses the whole constraint catalogue
/// (suppression, foreground floor, background band, size caps);
/// em_adapt_like drops everything but suppression and foreground floors;
/// tags_only_mil keeps suppression plus a one-pixel foreground floor per
/// tag; fully_supervised trains on the ground-truth mask directly.
enum class TrainMode { ccnn_full, em_adapt_like, tags_only_mil, fully_supervised };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 2000;
  int max_steps = 6000;
  SolverConfig solver;
  ConstraintConfig constraint_cfg;
  TrainMode mode = TrainMode::ccnn_full;
  double supervised_fraction = 0.0;  // fraction of images trained on ground truth
  unsigned seed = 0;
  int eval_every = 500;  // validation IoU cadence in steps

  void validate() const;
};

/// One row of the metrics log. iou_val is present only on evaluation steps.
struct StepMetrics {
  int step = 0;
  double loss = 0.0;       // cross entropy between latent P and output Q
  double kl = 0.0;         // KL(P || Q)
  double violation = 0.0;  // mean constraint shortfall of Q itself
  double iou_train = 0.0;  // IoU of argmax(Q) on the current example
  double iou_val = 0.0;
  bool has_val = false;
};

struct TrainState {
  int step = 0;
  std::vector<double> parameters;
  std::vector<double> velocity;
  std::vector<StepMetrics> metrics;
  std::map<int, std::vector<double>> lambda_cache;  // warm starts keyed by example id
  bool size_rows_omitted = false;  // ccnn_full example arrived without size bits
  bool aborted = false;
  std::string abort_reason;
};

struct BuildResult {
  ConstraintSet set;
  bool size_rows_omitted = false;
};

/// Assembles the constraint rows a mode derives from an example's weak
/// labels. ccnn_full without size bits omits the size rows and flags it.
BuildResult build_constraints(const SynthExample& example, TrainMode mode,
                              const ConstraintConfig& cfg);

/// One batch-size-1 step: forward, latent inference (dual solve, or the
/// ground-truth delta when supervised), score gradient, backward, momentum
/// update. Appends metrics. Returns false after aborting on a non-finite
/// loss. `supervised` is ignored in fully_supervised mode (always true).
bool train_step(Scorer& scorer, TrainState& state, const SynthExample& example,
                const TrainConfig& config, bool supervised = false);

/// Epochs over a seeded shuffle of the dataset until max_steps, with a
/// supervised subset of ceil(supervised_fraction * size) images fixed up
/// front by a seeded permutation. When a validation set is given, its mean
/// IoU is recorded every eval_every steps and on the final step.
TrainState train(Scorer& scorer, const std::vector<SynthExample>& dataset,
                 const TrainConfig& config,
                 const std::vector<SynthExample>* validation = nullptr);

/// Mean IoU of argmax predictions over a whole example set.
double evaluate_iou(Scorer& scorer, const std::vector<SynthExample>& examples);

/// CSV with header step,loss,kl,violation,iou_train,iou_val; the iou_val
/// cell is empty on non-evaluation steps. %.10g number formatting.
void write_metrics_csv(const std::vector<StepMetrics>& metrics, std::ostream& out);
void write_metrics_csv(const std::vector<StepMetrics>& metrics, const std::string& path);

}  // namespace ccnn
