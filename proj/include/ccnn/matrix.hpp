#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ccnn {

/// Dense row-major n x m matrix of classifier scores (logits).
/// Row i holds the per-label scores of pixel i; label 0 is background.
/// Immutable after construction.
class ScoreMatrix {
 public:
  ScoreMatrix(int pixels, int labels, std::vector<double> values)
      : n_(pixels), m_(labels), values_(std::move(values)) {
    if (n_ < 1 || m_ < 2)
      throw std::invalid_argument("ScoreMatrix: need n >= 1 and m >= 2");
    if (values_.size() != static_cast<std::size_t>(n_) * m_)
      throw std::invalid_argument("ScoreMatrix: value count does not match n*m");
    for (double v : values_)
      if (!std::isfinite(v))
        throw std::invalid_argument("ScoreMatrix: non-finite entry");
  }

  ScoreMatrix(int pixels, int labels)
      : ScoreMatrix(pixels, labels,
                    std::vector<double>(static_cast<std::size_t>(pixels) * labels, 0.0)) {}

  static ScoreMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("ScoreMatrix: no rows");
    const int m = static_cast<int>(rows.front().size());
    std::vector<double> flat;
    flat.reserve(rows.size() * m);
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != m)
        throw std::invalid_argument("ScoreMatrix: ragged rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return ScoreMatrix(static_cast<int>(rows.size()), m, std::move(flat));
  }

  int pixels() const { return n_; }
  int labels() const { return m_; }

  double operator()(int i, int l) const {
    return values_[static_cast<std::size_t>(i) * m_ + l];
  }
  std::span<const double> row(int i) const {
    return {values_.data() + static_cast<std::size_t>(i) * m_, static_cast<std::size_t>(m_)};
  }
  const double* data() const { return values_.data(); }
  const std::vector<double>& values() const { return values_; }

 private:
  int n_;
  int m_;
  std::vector<double> values_;
};

/// Row-stochastic n x m matrix of per-pixel label marginals.
/// Houses both the network output Q and the latent distribution P.
/// Immutable after construction; every row sums to 1 within 1e-9.
class LabelDistribution {
 public:
  LabelDistribution(int pixels, int labels, std::vector<double> values)
      : n_(pixels), m_(labels), values_(std::move(values)) {
    if (n_ < 1 || m_ < 2)
      throw std::invalid_argument("LabelDistribution: need n >= 1 and m >= 2");
    if (values_.size() != static_cast<std::size_t>(n_) * m_)
      throw std::invalid_argument("LabelDistribution: value count does not match n*m");
    for (int i = 0; i < n_; ++i) {
      double sum = 0.0;
      for (int l = 0; l < m_; ++l) {
        const double v = values_[static_cast<std::size_t>(i) * m_ + l];
        if (!(v >= 0.0))
          throw std::invalid_argument("LabelDistribution: negative or NaN entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("LabelDistribution: row does not sum to 1");
    }
  }

  /// One-hot distribution from a ground-truth label mask.
  static LabelDistribution delta(const std::vector<int>& mask, int labels) {
    std::vector<double> v(mask.size() * labels, 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] < 0 || mask[i] >= labels)
        throw std::invalid_argument("LabelDistribution::delta: label out of range");
      v[i * labels + mask[i]] = 1.0;
    }
    return LabelDistribution(static_cast<int>(mask.size()), labels, std::move(v));
  }

  int pixels() const { return n_; }
  int labels() const { return m_; }

  double operator()(int i, int l) const {
    return values_[static_cast<std::size_t>(i) * m_ + l];
  }
  std::span<const double> row(int i) const {
    return {values_.data() + static_cast<std::size_t>(i) * m_, static_cast<std::size_t>(m_)};
  }
  const double* data() const { return values_.data(); }
  const std::vector<double>& values() const { return values_; }

 private:
  int n_;
  int m_;
  std::vector<double> values_;
};

inline void require_same_shape(const LabelDistribution& a, const LabelDistribution& b) {
  if (a.pixels() != b.pixels() || a.labels() != b.labels())
    throw std::invalid_argument("shape mismatch");
}

}  // namespace ccnn
