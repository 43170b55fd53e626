#pragma once

#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ccnn/kernels.hpp"
#include "ccnn/matrix.hpp"

namespace ccnn {

/// Slack weight marking a hard constraint (no upper bound on its dual).
inline constexpr double kHardConstraint = std::numeric_limits<double>::infinity();

enum class ConstraintTag {
  suppression,
  foreground,
  background_lower,
  background_upper,
  size_upper,
  custom,
};

std::string to_string(ConstraintTag tag);
ConstraintTag constraint_tag_from_string(const std::string& name);

struct Coefficient {
  int pixel = 0;
  int label = 0;
  double value = 0.0;
};

/// One linear inequality sum_{(i,l)} c_{il} p_i(l) >= bound. Upper bounds
/// are encoded with negated coefficients so a single dual sign regime
/// (lambda >= 0) covers every row.
struct ConstraintRow {
  std::vector<Coefficient> coefficients;
  double bound = 0.0;
  double slack_weight = kHardConstraint;
  ConstraintTag tag = ConstraintTag::custom;
};

/// Bound fractions and slack weights for the tag-derived constraint rows.
struct ConstraintConfig {
  double a_fg = 0.05;        // foreground lower fraction
  double beta_fg = 2.0;      // foreground slack weight
  double a_bg = 0.3;         // background lower fraction
  double b_bg = 0.7;         // background upper fraction
  double a_big = 0.1;        // boosted lower fraction for large objects
  double b_small = 0.01;     // upper fraction for small objects
  double beta_default = 2.0; // slack weight for all other rows

  void validate() const;
};

/// A validated, immutable set of constraint rows over an n x m output.
/// Row order is stable and indexes the dual variables.
class ConstraintSet {
 public:
  ConstraintSet(int pixels, int labels) : n_(pixels), m_(labels) {}

  static ConstraintSet assemble(std::vector<ConstraintRow> rows, int pixels, int labels);

  int size() const { return static_cast<int>(rows_.size()); }
  bool empty() const { return rows_.empty(); }
  int pixels() const { return n_; }
  int labels() const { return m_; }
  const std::vector<ConstraintRow>& rows() const { return rows_; }
  const ConstraintRow& row(int j) const { return rows_[j]; }

  std::vector<double> bounds() const;
  std::vector<double> slack_weights() const;

  /// A  vec(P) for raw row-major probabilities; out has one entry per row.
  void values_raw(const double* probs, double* out,
                  kernels::Exec exec = kernels::default_exec()) const;
  std::vector<double> values(const LabelDistribution& p,
                             kernels::Exec exec = kernels::default_exec()) const;

  /// bias[i,l] += sum_j lambda_j c_j(i,l); the A^T lambda term of the
  /// biased marginals. Serial scatter (rows may overlap entries).
  void accumulate_bias(std::span<const double> lambda, double* bias) const;

 private:
  int n_;
  int m_;
  std::vector<ConstraintRow> rows_;
};

/// Suppression rows: for each foreground label absent from tags, encodes
/// sum_i p_i(l) <= 0 as -sum_i p_i(l) >= 0 with the default slack weight.
std::vector<ConstraintRow> suppression_rows(const std::set<int>& tags,
                                            const ConstraintConfig& cfg, int n, int m);

/// Foreground floor rows: sum_i p_i(l) >= a n for each present label, with
/// the boosted fraction a_big when the label is marked large.
std::vector<ConstraintRow> foreground_rows(const std::set<int>& tags,
                                           const std::set<int>& large_labels,
                                           const ConstraintConfig& cfg, int n, int m);

/// Background band rows: a_bg n <= sum_i p_i(0) <= b_bg n as two >= rows.
std::vector<ConstraintRow> background_rows(const ConstraintConfig& cfg, int n, int m);

/// Size cap rows: sum_i p_i(l) <= b_small n for each label known small.
std::vector<ConstraintRow> size_rows(const std::set<int>& small_labels,
                                     const std::set<int>& large_labels,
                                     const ConstraintConfig& cfg, int n, int m);

}  // namespace ccnn
