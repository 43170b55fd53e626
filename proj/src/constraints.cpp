#include "ccnn/constraints.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ccnn {

namespace {

void check_foreground_labels(const std::set<int>& labels, int m, const char* what) {
  for (int l : labels)
    if (l < 1 || l >= m)
      throw std::invalid_argument(std::string(what) + ": label out of range [1, m)");
}

ConstraintRow column_row(int label, double coeff, double bound, double slack_weight,
                         ConstraintTag tag, int n) {
  ConstraintRow row;
  row.coefficients.reserve(n);
  for (int i = 0; i < n; ++i) row.coefficients.push_back({i, label, coeff});
  row.bound = bound;
  row.slack_weight = slack_weight;
  row.tag = tag;
  return row;
}

}  // namespace

std::string to_string(ConstraintTag tag) {
  switch (tag) {
    case ConstraintTag::suppression: return "suppression";
    case ConstraintTag::foreground: return "foreground";
    case ConstraintTag::background_lower: return "background_lower";
    case ConstraintTag::background_upper: return "background_upper";
    case ConstraintTag::size_upper: return "size_upper";
    case ConstraintTag::custom: return "custom";
  }
  return "custom";
}

ConstraintTag constraint_tag_from_string(const std::string& name) {
  if (name == "suppression") return ConstraintTag::suppression;
  if (name == "foreground") return ConstraintTag::foreground;
  if (name == "background_lower") return ConstraintTag::background_lower;
  if (name == "background_upper") return ConstraintTag::background_upper;
  if (name == "size_upper") return ConstraintTag::size_upper;
  if (name == "custom") return ConstraintTag::custom;
  throw std::invalid_argument("unknown constraint tag: " + name);
}

void ConstraintConfig::validate() const {
  if (!(0.0 <= a_bg && a_bg <= b_bg && b_bg <= 1.0))
    throw std::invalid_argument("ConstraintConfig: need 0 <= a_bg <= b_bg <= 1");
  if (!(0.0 <= a_fg && a_fg <= 1.0))
    throw std::invalid_argument("ConstraintConfig: need 0 <= a_fg <= 1");
  if (!(0.0 <= b_small && b_small <= 1.0))
    throw std::invalid_argument("ConstraintConfig: need 0 <= b_small <= 1");
  if (!(0.0 <= a_big && a_big <= 1.0))
    throw std::invalid_argument("ConstraintConfig: need 0 <= a_big <= 1");
  if (!(beta_fg > 0.0) || !(beta_default > 0.0))
    throw std::invalid_argument("ConstraintConfig: slack weights must be positive");
}

ConstraintSet ConstraintSet::assemble(std::vector<ConstraintRow> rows, int pixels, int labels) {
  if (pixels < 1 || labels < 2)
    throw std::invalid_argument("ConstraintSet: need n >= 1 and m >= 2");
  for (const auto& row : rows) {
    if (row.coefficients.empty())
      throw std::invalid_argument("ConstraintSet: row with no coefficients");
    if (!(row.slack_weight > 0.0))
      throw std::invalid_argument("ConstraintSet: slack weight must be positive");
    if (!std::isfinite(row.bound))
      throw std::invalid_argument("ConstraintSet: non-finite bound");
    for (const auto& c : row.coefficients) {
      if (c.pixel < 0 || c.pixel >= pixels || c.label < 0 || c.label >= labels)
        throw std::invalid_argument("ConstraintSet: coefficient index out of range");
      if (!std::isfinite(c.value))
        throw std::invalid_argument("ConstraintSet: non-finite coefficient");
    }
  }
  ConstraintSet set(pixels, labels);
  set.rows_ = std::move(rows);
  return set;
}

std::vector<double> ConstraintSet::bounds() const {
  std::vector<double> b(rows_.size());
  for (std::size_t j = 0; j < rows_.size(); ++j) b[j] = rows_[j].bound;
  return b;
}

std::vector<double> ConstraintSet::slack_weights() const {
  std::vector<double> b(rows_.size());
  for (std::size_t j = 0; j < rows_.size(); ++j) b[j] = rows_[j].slack_weight;
  return b;
}

void ConstraintSet::values_raw(const double* probs, double* out, kernels::Exec exec) const {
  kernels::for_rows(rows_.size(), exec, [&](std::size_t j) {
    const auto& row = rows_[j];
    double acc = 0.0;
    for (const auto& c : row.coefficients)
      acc += c.value * probs[static_cast<std::size_t>(c.pixel) * m_ + c.label];
    out[j] = acc;
  });
}

std::vector<double> ConstraintSet::values(const LabelDistribution& p, kernels::Exec exec) const {
  if (p.pixels() != n_ || p.labels() != m_)
    throw std::invalid_argument("ConstraintSet::values: shape mismatch");
  std::vector<double> out(rows_.size());
  values_raw(p.data(), out.data(), exec);
  return out;
}

void ConstraintSet::accumulate_bias(std::span<const double> lambda, double* bias) const {
  if (lambda.size() != rows_.size())
    throw std::invalid_argument("ConstraintSet::accumulate_bias: lambda size mismatch");
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    const double lj = lambda[j];
    if (lj == 0.0) continue;
    for (const auto& c : rows_[j].coefficients)
      bias[static_cast<std::size_t>(c.pixel) * m_ + c.label] += lj * c.value;
  }
}

std::vector<ConstraintRow> suppression_rows(const std::set<int>& tags,
                                            const ConstraintConfig& cfg, int n, int m) {
  check_foreground_labels(tags, m, "suppression_rows");
  std::vector<ConstraintRow> rows;
  for (int l = 1; l < m; ++l) {
    if (tags.count(l)) continue;
    rows.push_back(column_row(l, -1.0, 0.0, cfg.beta_default, ConstraintTag::suppression, n));
  }
  return rows;
}

std::vector<ConstraintRow> foreground_rows(const std::set<int>& tags,
                                           const std::set<int>& large_labels,
                                           const ConstraintConfig& cfg, int n, int m) {
  check_foreground_labels(tags, m, "foreground_rows");
  std::vector<ConstraintRow> rows;
  for (int l : tags) {
    const double fraction = large_labels.count(l) ? cfg.a_big : cfg.a_fg;
    rows.push_back(
        column_row(l, 1.0, fraction * n, cfg.beta_fg, ConstraintTag::foreground, n));
  }
  return rows;
}

std::vector<ConstraintRow> background_rows(const ConstraintConfig& cfg, int n, int m) {
  if (m < 2) throw std::invalid_argument("background_rows: need m >= 2");
  std::vector<ConstraintRow> rows;
  rows.push_back(
      column_row(0, 1.0, cfg.a_bg * n, cfg.beta_default, ConstraintTag::background_lower, n));
  rows.push_back(
      column_row(0, -1.0, -cfg.b_bg * n, cfg.beta_default, ConstraintTag::background_upper, n));
  return rows;
}

std::vector<ConstraintRow> size_rows(const std::set<int>& small_labels,
                                     const std::set<int>& large_labels,
                                     const ConstraintConfig& cfg, int n, int m) {
  check_foreground_labels(small_labels, m, "size_rows");
  for (int l : small_labels)
    if (large_labels.count(l))
      throw std::invalid_argument("size_rows: label marked both small and large");
  std::vector<ConstraintRow> rows;
  for (int l : small_labels)
    rows.push_back(
        column_row(l, -1.0, -cfg.b_small * n, cfg.beta_default, ConstraintTag::size_upper, n));
  return rows;
}

}  // namespace ccnn
