#include "ccnn/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>

namespace ccnn {

namespace {

std::vector<double> gaussian_weights(std::size_t count, unsigned seed, double std_dev) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<double> w(count);
  for (auto& v : w) v = dist(rng);
  return w;
}

class LinearScorer final : public Scorer {
 public:
  LinearScorer(int d, int m, unsigned seed) : d_(d), m_(m) {
    if (d < 1 || m < 2) throw std::invalid_argument("linear_scorer: need d >= 1 and m >= 2");
    params_ = gaussian_weights(static_cast<std::size_t>(d) * m, seed, 0.01);
    params_.resize(static_cast<std::size_t>(d) * m + m, 0.0);  // bias block stays 0
  }

  ScoreMatrix forward(const FeatureGrid& features) override {
    if (features.channels != d_)
      throw std::invalid_argument("linear_scorer: feature channel count != d");
    const int n = features.pixels();
    std::vector<double> scores(static_cast<std::size_t>(n) * m_);
    const double* bias = params_.data() + static_cast<std::size_t>(d_) * m_;
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < m_; ++l) {
        double s = bias[l];
        for (int c = 0; c < d_; ++c) s += features.at(i, c) * params_[c * m_ + l];
        scores[static_cast<std::size_t>(i) * m_ + l] = s;
      }
    cached_ = features;
    return ScoreMatrix(n, m_, std::move(scores));
  }

  std::vector<double> backward(const ScoreMatrix& g) override {
    if (!cached_) throw std::logic_error("linear_scorer: backward without forward");
    const FeatureGrid& x = *cached_;
    if (g.pixels() != x.pixels() || g.labels() != m_)
      throw std::invalid_argument("linear_scorer: gradient shape mismatch");
    std::vector<double> grad(params_.size(), 0.0);
    double* db = grad.data() + static_cast<std::size_t>(d_) * m_;
    for (int i = 0; i < x.pixels(); ++i)
      for (int l = 0; l < m_; ++l) {
        const double gil = g(i, l);
        for (int c = 0; c < d_; ++c) grad[c * m_ + l] += x.at(i, c) * gil;
        db[l] += gil;
      }
    cached_.reset();
    return grad;
  }

  std::vector<double> parameters() const override { return params_; }
  void set_parameters(std::span<const double> p) override {
    if (p.size() != params_.size())
      throw std::invalid_argument("linear_scorer: parameter count mismatch");
    params_.assign(p.begin(), p.end());
  }
  std::size_t parameter_count() const override { return params_.size(); }
  int label_count() const override { return m_; }

 private:
  int d_;
  int m_;
  std::vector<double> params_;  // W (d x m, row-major by channel) then bias (m)
  std::optional<FeatureGrid> cached_;
};

/// Same-size 2-D cross-correlation with zero padding.
/// in:  h x w x cin, pixel-major.  weights: [cout][k*k*cin].  out: h x w x cout.
void conv_forward(int h, int w, int cin, int cout, int k, const double* in,
                  const double* weights, const double* bias, double* out) {
  const int r = k / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        double s = bias[co];
        const double* wrow = weights + static_cast<std::size_t>(co) * k * k * cin;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const double* cell = in + (static_cast<std::size_t>(yy) * w + xx) * cin;
            const double* wk = wrow + ((dy + r) * k + (dx + r)) * cin;
            for (int ci = 0; ci < cin; ++ci) s += cell[ci] * wk[ci];
          }
        }
        out[(static_cast<std::size_t>(y) * w + x) * cout + co] = s;
      }
}

/// Gradients of conv_forward: d_in (may be null), d_weights, d_bias from
/// d_out, accumulating into zero-initialized buffers.
void conv_backward(int h, int w, int cin, int cout, int k, const double* in, const double* weights,
                   const double* d_out, double* d_in, double* d_weights, double* d_bias) {
  const int r = k / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        const double g = d_out[(static_cast<std::size_t>(y) * w + x) * cout + co];
        if (g == 0.0) continue;
        d_bias[co] += g;
        const double* wrow = weights + static_cast<std::size_t>(co) * k * k * cin;
        double* dwrow = d_weights + static_cast<std::size_t>(co) * k * k * cin;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const std::size_t cell = (static_cast<std::size_t>(yy) * w + xx) * cin;
            const int tap = ((dy + r) * k + (dx + r)) * cin;
            for (int ci = 0; ci < cin; ++ci) {
              dwrow[tap + ci] += g * in[cell + ci];
              if (d_in) d_in[cell + ci] += g * wrow[tap + ci];
            }
          }
        }
      }
}

class ConvScorer final : public Scorer {
 public:
  ConvScorer(int hidden, int kernel, int m, unsigned seed)
      : hidden_(hidden), k_(kernel), m_(m) {
    if (m < 2 || hidden < 0) throw std::invalid_argument("conv_scorer: bad channel counts");
    if (kernel < 1 || kernel % 2 == 0)
      throw std::invalid_argument("conv_scorer: kernel_size must be odd and positive");
    const std::size_t kk = static_cast<std::size_t>(k_) * k_;
    std::size_t weight_count, total;
    if (hidden_ > 0) {
      w1_count_ = kk * m_ * hidden_;  // input channels = m
      w2_count_ = kk * hidden_ * m_;
      weight_count = w1_count_ + w2_count_;
      total = w1_count_ + hidden_ + w2_count_ + m_;
    } else {
      w1_count_ = kk * m_ * m_;
      w2_count_ = 0;
      weight_count = w1_count_;
      total = w1_count_ + m_;
    }
    // weights first, biases zero; layout documented in offsets() below
    const auto weights = gaussian_weights(weight_count, seed, 0.01);
    params_.assign(total, 0.0);
    if (hidden_ > 0) {
      std::copy_n(weights.data(), w1_count_, params_.data());
      std::copy_n(weights.data() + w1_count_, w2_count_, params_.data() + w1_count_ + hidden_);
    } else {
      std::copy_n(weights.data(), w1_count_, params_.data());
    }
  }

  ScoreMatrix forward(const FeatureGrid& features) override {
    if (features.channels != m_)
      throw std::invalid_argument("conv_scorer: feature channel count != m");
    const int h = features.height, w = features.width;
    const int n = features.pixels();
    std::vector<double> scores(static_cast<std::size_t>(n) * m_);
    if (hidden_ > 0) {
      pre_.assign(static_cast<std::size_t>(n) * hidden_, 0.0);
      conv_forward(h, w, m_, hidden_, k_, features.values.data(), w1(), b1(), pre_.data());
      hidden_act_.resize(pre_.size());
      margin_ = std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < pre_.size(); ++e) {
        hidden_act_[e] = std::max(pre_[e], 0.0);
        margin_ = std::min(margin_, std::abs(pre_[e]));
      }
      conv_forward(h, w, hidden_, m_, k_, hidden_act_.data(), w2(), b2(), scores.data());
    } else {
      margin_ = std::numeric_limits<double>::infinity();
      conv_forward(h, w, m_, m_, k_, features.values.data(), w1(), b1(), scores.data());
    }
    cached_ = features;
    return ScoreMatrix(n, m_, std::move(scores));
  }

  std::vector<double> backward(const ScoreMatrix& g) override {
    if (!cached_) throw std::logic_error("conv_scorer: backward without forward");
    const FeatureGrid& x = *cached_;
    if (g.pixels() != x.pixels() || g.labels() != m_)
      throw std::invalid_argument("conv_scorer: gradient shape mismatch");
    const int h = x.height, w = x.width;
    std::vector<double> grad(params_.size(), 0.0);
    if (hidden_ > 0) {
      std::vector<double> d_hidden(hidden_act_.size(), 0.0);
      conv_backward(h, w, hidden_, m_, k_, hidden_act_.data(), w2(), g.data(), d_hidden.data(),
                    grad.data() + w1_count_ + hidden_, grad.data() + w1_count_ + hidden_ + w2_count_);
      for (std::size_t e = 0; e < d_hidden.size(); ++e)
        if (pre_[e] <= 0.0) d_hidden[e] = 0.0;  // rectifier gate
      conv_backward(h, w, m_, hidden_, k_, x.values.data(), w1(), d_hidden.data(), nullptr,
                    grad.data(), grad.data() + w1_count_);
    } else {
      conv_backward(h, w, m_, m_, k_, x.values.data(), w1(), g.data(), nullptr, grad.data(),
                    grad.data() + w1_count_);
    }
    cached_.reset();
    return grad;
  }

  std::vector<double> parameters() const override { return params_; }
  void set_parameters(std::span<const double> p) override {
    if (p.size() != params_.size())
      throw std::invalid_argument("conv_scorer: parameter count mismatch");
    params_.assign(p.begin(), p.end());
  }
  std::size_t parameter_count() const override { return params_.size(); }
  int label_count() const override { return m_; }
  double kink_margin() const override { return margin_; }

 private:
  // layout: W1 | b1 | W2 | b2 (hidden > 0), or W1 | b1 (single conv)
  const double* w1() const { return params_.data(); }
  const double* b1() const { return params_.data() + w1_count_; }
  const double* w2() const { return params_.data() + w1_count_ + (hidden_ > 0 ? hidden_ : m_); }
  const double* b2() const { return w2() + w2_count_; }

  int hidden_;
  int k_;
  int m_;
  std::size_t w1_count_ = 0;
  std::size_t w2_count_ = 0;
  std::vector<double> params_;
  std::vector<double> pre_;         // hidden pre-activations of the last forward
  std::vector<double> hidden_act_;  // rectified hidden activations
  double margin_ = std::numeric_limits<double>::infinity();
  std::optional<FeatureGrid> cached_;
};

class SignFlippedScorer final : public Scorer {
 public:
  explicit SignFlippedScorer(std::unique_ptr<Scorer> inner) : inner_(std::move(inner)) {}
  ScoreMatrix forward(const FeatureGrid& f) override { return inner_->forward(f); }
  std::vector<double> backward(const ScoreMatrix& g) override {
    auto grad = inner_->backward(g);
    for (auto& v : grad) v = -v;
    return grad;
  }
  std::vector<double> parameters() const override { return inner_->parameters(); }
  void set_parameters(std::span<const double> p) override { inner_->set_parameters(p); }
  std::size_t parameter_count() const override { return inner_->parameter_count(); }
  int label_count() const override { return inner_->label_count(); }
  double kink_margin() const override { return inner_->kink_margin(); }

 private:
  std::unique_ptr<Scorer> inner_;
};

}  // namespace

std::unique_ptr<Scorer> linear_scorer(int d, int m, unsigned init_seed) {
  return std::make_unique<LinearScorer>(d, m, init_seed);
}

std::unique_ptr<Scorer> conv_scorer(int channels, int kernel_size, int m, unsigned init_seed) {
  return std::make_unique<ConvScorer>(channels, kernel_size, m, init_seed);
}

std::unique_ptr<Scorer> with_sign_flipped_backward(std::unique_ptr<Scorer> inner) {
  return std::make_unique<SignFlippedScorer>(std::move(inner));
}

double gradient_check(Scorer& scorer, const FeatureGrid& features, int probe_count, double h,
                      unsigned seed) {
  if (h <= 0.0) throw std::invalid_argument("gradient_check: h must be positive");
  if (probe_count < 1) throw std::invalid_argument("gradient_check: probe_count must be >= 1");

  const int m = scorer.label_count();
  const int n = features.pixels();
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // fixed random linear functional of the scores: loss = sum R * scores
  std::vector<double> r(static_cast<std::size_t>(n) * m);
  for (auto& v : r) v = gauss(rng);
  const ScoreMatrix r_mat(n, m, r);

  auto loss_of = [&](const ScoreMatrix& s) {
    double acc = 0.0;
    for (std::size_t e = 0; e < r.size(); ++e) acc += r[e] * s.data()[e];
    return acc;
  };

  (void)scorer.forward(features);
  const std::vector<double> analytic = scorer.backward(r_mat);
  const std::vector<double> base = scorer.parameters();
  const std::size_t pcount = base.size();

  std::uniform_int_distribution<std::size_t> pick(0, pcount - 1);
  double worst = 0.0;
  int accepted = 0;
  int attempts = 0;
  const int attempt_cap = probe_count * 100;
  std::vector<double> theta = base;

  while (accepted < probe_count && attempts < attempt_cap) {
    ++attempts;
    const std::size_t j = pick(rng);
    bool near_kink = false;
    double losses[2];
    for (int side = 0; side < 2; ++side) {
      theta[j] = base[j] + (side == 0 ? h : -h);
      scorer.set_parameters(theta);
      const ScoreMatrix s = scorer.forward(features);
      if (scorer.kink_margin() < 10.0 * h) near_kink = true;
      losses[side] = loss_of(s);
    }
    theta[j] = base[j];
    if (near_kink && attempts < attempt_cap) continue;  // resample this probe

    const double numeric = (losses[0] - losses[1]) / (2.0 * h);
    const double denom = std::max(std::abs(analytic[j]), std::abs(numeric));
    const double rel = denom < 1e-12 ? 0.0 : std::abs(analytic[j] - numeric) / denom;
    worst = std::max(worst, rel);
    ++accepted;
  }

  scorer.set_parameters(base);
  return worst;
}

void save_parameters(const Scorer& scorer, const std::string& path) {
  const auto params = scorer.parameters();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_parameters: cannot open " + path);
  const std::uint64_t count = params.size();
  char buf[8];
  std::memcpy(buf, &count, 8);
  out.write(buf, 8);
  for (double v : params) {
    std::memcpy(buf, &v, 8);
    out.write(buf, 8);
  }
  if (!out) throw std::runtime_error("save_parameters: write failed for " + path);
}

void load_parameters(Scorer& scorer, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_parameters: cannot open " + path);
  char buf[8];
  if (!in.read(buf, 8)) throw std::runtime_error("load_parameters: truncated header");
  std::uint64_t count = 0;
  std::memcpy(&count, buf, 8);
  if (count != scorer.parameter_count())
    throw std::runtime_error("load_parameters: parameter count mismatch");
  std::vector<double> params(count);
  for (auto& v : params) {
    if (!in.read(buf, 8)) throw std::runtime_error("load_parameters: truncated data");
    std::memcpy(&v, buf, 8);
  }
  scorer.set_parameters(params);
}

}  // namespace ccnn
