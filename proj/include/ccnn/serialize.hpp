#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ccnn/constraints.hpp"
#include "ccnn/dual_solver.hpp"
#include "ccnn/matrix.hpp"
#include "ccnn/synthdata.hpp"
#include "ccnn/trainer.hpp"

namespace ccnn {

/// A solvable problem as it travels through files: raw scores plus the
/// constraint rows (not yet assembled, so dimension errors surface with
/// file-level context).
struct Instance {
  ScoreMatrix scores;
  std::vector<ConstraintRow> rows;
};

/// Row schema: {"coeffs": [[pixel, label, value], ...], "bound": b,
/// "beta": number or null for hard}. "tag" is optional.
nlohmann::json row_to_json(const ConstraintRow& row);
ConstraintRow row_from_json(const nlohmann::json& j);

/// Instance schema: {"scores": n x m nested array, "constraints": [rows]}.
nlohmann::json instance_to_json(const Instance& instance);
Instance instance_from_json(const nlohmann::json& j);

nlohmann::json distribution_to_json(const LabelDistribution& p);

/// Solve output: P, lambda, dual_value, iterations, converged,
/// max_violation, plus the resolved solver config.
nlohmann::json solve_result_to_json(const SolveResult& result, const ScoreMatrix& scores,
                                    const ConstraintSet& cs, const SolverConfig& config);

nlohmann::json dataset_to_json(const std::vector<SynthExample>& dataset);
std::vector<SynthExample> dataset_from_json(const nlohmann::json& j);

/// TrainConfig keys mirror the struct field names; missing keys keep the
/// defaults. solver and constraint_cfg are nested objects.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

}  // namespace ccnn
