#include "ccnn/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace ccnn {

using nlohmann::json;

json row_to_json(const ConstraintRow& row) {
  json coeffs = json::array();
  for (const auto& c : row.coefficients) coeffs.push_back({c.pixel, c.label, c.value});
  json j{{"coeffs", std::move(coeffs)}, {"bound", row.bound}};
  if (row.slack_weight == kHardConstraint)
    j["beta"] = nullptr;
  else
    j["beta"] = row.slack_weight;
  j["tag"] = to_string(row.tag);
  return j;
}

ConstraintRow row_from_json(const json& j) {
  if (!j.is_object() || !j.contains("coeffs") || !j.contains("bound"))
    throw std::invalid_argument("constraint row: need coeffs and bound");
  ConstraintRow row;
  for (const auto& triple : j.at("coeffs")) {
    if (!triple.is_array() || triple.size() != 3)
      throw std::invalid_argument("constraint row: coeffs entries must be [pixel, label, value]");
    row.coefficients.push_back(
        {triple[0].get<int>(), triple[1].get<int>(), triple[2].get<double>()});
  }
  row.bound = j.at("bound").get<double>();
  if (j.contains("beta") && !j.at("beta").is_null())
    row.slack_weight = j.at("beta").get<double>();
  else
    row.slack_weight = kHardConstraint;
  if (j.contains("tag")) row.tag = constraint_tag_from_string(j.at("tag").get<std::string>());
  return row;
}

json instance_to_json(const Instance& instance) {
  json scores = json::array();
  for (int i = 0; i < instance.scores.pixels(); ++i) {
    json row = json::array();
    for (int l = 0; l < instance.scores.labels(); ++l) row.push_back(instance.scores(i, l));
    scores.push_back(std::move(row));
  }
  json rows = json::array();
  for (const auto& r : instance.rows) rows.push_back(row_to_json(r));
  return json{{"scores", std::move(scores)}, {"constraints", std::move(rows)}};
}

namespace {

ScoreMatrix scores_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("scores: need a nonempty 2-D array");
  std::vector<std::vector<double>> rows;
  rows.reserve(j.size());
  for (const auto& r : j) {
    if (!r.is_array()) throw std::invalid_argument("scores: rows must be arrays");
    rows.push_back(r.get<std::vector<double>>());
  }
  return ScoreMatrix::from_rows(rows);
}

}  // namespace

Instance instance_from_json(const json& j) {
  if (!j.is_object() || !j.contains("scores"))
    throw std::invalid_argument("instance: need a scores field");
  Instance instance{scores_from_json(j.at("scores")), {}};
  if (j.contains("constraints"))
    for (const auto& r : j.at("constraints")) instance.rows.push_back(row_from_json(r));
  return instance;
}

json distribution_to_json(const LabelDistribution& p) {
  json out = json::array();
  for (int i = 0; i < p.pixels(); ++i) {
    json row = json::array();
    for (int l = 0; l < p.labels(); ++l) row.push_back(p(i, l));
    out.push_back(std::move(row));
  }
  return out;
}

json solve_result_to_json(const SolveResult& result, const ScoreMatrix& scores,
                          const ConstraintSet& cs, const SolverConfig& config) {
  json j;
  j["P"] = distribution_to_json(result.p);
  j["lambda"] = result.state.lambda;
  j["dual_value"] = dual_value(result.state.lambda, scores, cs);
  j["iterations"] = result.state.iterations;
  j["converged"] = result.state.converged;
  j["max_violation"] = result.state.max_violation;
  j["config"] = {{"max_iters", config.max_iters},
                 {"step_size", config.step_size},
                 {"tolerance", config.tolerance},
                 {"backtracking", config.backtracking},
                 {"lambda_cap", config.lambda_cap}};
  return j;
}

json dataset_to_json(const std::vector<SynthExample>& dataset) {
  json examples = json::array();
  for (const auto& ex : dataset) {
    json features = json::array();
    for (int i = 0; i < ex.features.pixels(); ++i) {
      json cell = json::array();
      for (int c = 0; c < ex.features.channels; ++c) cell.push_back(ex.features.at(i, c));
      features.push_back(std::move(cell));
    }
    json size_bits = json::object();
    for (const auto& [tag, big] : ex.size_bits) size_bits[std::to_string(tag)] = big;
    examples.push_back(json{{"id", ex.id},
                            {"height", ex.features.height},
                            {"width", ex.features.width},
                            {"features", std::move(features)},
                            {"mask", ex.mask},
                            {"tags", std::vector<int>(ex.tags.begin(), ex.tags.end())},
                            {"size_bits", std::move(size_bits)},
                            {"has_size_bits", ex.has_size_bits}});
  }
  return json{{"examples", std::move(examples)}};
}

std::vector<SynthExample> dataset_from_json(const json& j) {
  if (!j.is_object() || !j.contains("examples"))
    throw std::invalid_argument("dataset: need an examples field");
  std::vector<SynthExample> out;
  for (const auto& e : j.at("examples")) {
    const int height = e.at("height").get<int>();
    const int width = e.at("width").get<int>();
    const auto& feats = e.at("features");
    if (!feats.is_array() || feats.empty())
      throw std::invalid_argument("dataset: features must be a nonempty array");
    const int channels = static_cast<int>(feats.front().size());
    std::vector<double> values;
    values.reserve(feats.size() * channels);
    for (const auto& cell : feats) {
      const auto row = cell.get<std::vector<double>>();
      if (static_cast<int>(row.size()) != channels)
        throw std::invalid_argument("dataset: ragged feature rows");
      values.insert(values.end(), row.begin(), row.end());
    }
    SynthExample ex{FeatureGrid(height, width, channels, std::move(values)),
                    e.at("mask").get<std::vector<int>>(),
                    {},
                    {},
                    e.value("has_size_bits", true),
                    e.at("id").get<int>()};
    for (int t : e.at("tags").get<std::vector<int>>()) ex.tags.insert(t);
    if (e.contains("size_bits"))
      for (const auto& [key, val] : e.at("size_bits").items())
        ex.size_bits[std::stoi(key)] = val.get<bool>();
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.lr_decay_factor = j.value("lr_decay_factor", cfg.lr_decay_factor);
  cfg.lr_decay_every = j.value("lr_decay_every", cfg.lr_decay_every);
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  cfg.supervised_fraction = j.value("supervised_fraction", cfg.supervised_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  if (j.contains("mode")) cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
    cfg.solver.step_size = s.value("step_size", cfg.solver.step_size);
    cfg.solver.tolerance = s.value("tolerance", cfg.solver.tolerance);
    cfg.solver.backtracking = s.value("backtracking", cfg.solver.backtracking);
    cfg.solver.lambda_cap = s.value("lambda_cap", cfg.solver.lambda_cap);
  }
  if (j.contains("constraint_cfg")) {
    const auto& c = j.at("constraint_cfg");
    cfg.constraint_cfg.a_fg = c.value("a_fg", cfg.constraint_cfg.a_fg);
    cfg.constraint_cfg.beta_fg = c.value("beta_fg", cfg.constraint_cfg.beta_fg);
    cfg.constraint_cfg.a_bg = c.value("a_bg", cfg.constraint_cfg.a_bg);
    cfg.constraint_cfg.b_bg = c.value("b_bg", cfg.constraint_cfg.b_bg);
    cfg.constraint_cfg.a_big = c.value("a_big", cfg.constraint_cfg.a_big);
    cfg.constraint_cfg.b_small = c.value("b_small", cfg.constraint_cfg.b_small);
    cfg.constraint_cfg.beta_default = c.value("beta_default", cfg.constraint_cfg.beta_default);
  }
  return cfg;
}

json train_config_to_json(const TrainConfig& config) {
  return json{
      {"learning_rate", config.learning_rate},
      {"momentum", config.momentum},
      {"lr_decay_factor", config.lr_decay_factor},
      {"lr_decay_every", config.lr_decay_every},
      {"max_steps", config.max_steps},
      {"supervised_fraction", config.supervised_fraction},
      {"seed", config.seed},
      {"eval_every", config.eval_every},
      {"mode", to_string(config.mode)},
      {"solver",
       {{"max_iters", config.solver.max_iters},
        {"step_size", config.solver.step_size},
        {"tolerance", config.solver.tolerance},
        {"backtracking", config.solver.backtracking},
        {"lambda_cap", config.solver.lambda_cap}}},
      {"constraint_cfg",
       {{"a_fg", config.constraint_cfg.a_fg},
        {"beta_fg", config.constraint_cfg.beta_fg},
        {"a_bg", config.constraint_cfg.a_bg},
        {"b_bg", config.constraint_cfg.b_bg},
        {"a_big", config.constraint_cfg.a_big},
        {"b_small", config.constraint_cfg.b_small},
        {"beta_default", config.constraint_cfg.beta_default}}},
  };
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;  // throws nlohmann::json::parse_error on malformed input
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace ccnn
