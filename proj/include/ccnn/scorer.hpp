#pragma once

#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccnn/matrix.hpp"

namespace ccnn {

/// Per-image input: a height x width grid of pixels, each carrying
/// `channels` real feature values. Row-major, pixel-major storage:
/// values[(y * width + x) * channels + c]. A flat (non-spatial) feature
/// table is a grid of width 1.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureGrid(int h, int w, int c, std::vector<double> vals)
      : height(h), width(w), channels(c), values(std::move(vals)) {
    if (h < 1 || w < 1 || c < 1) throw std::invalid_argument("FeatureGrid: bad shape");
    if (values.size() != static_cast<std::size_t>(h) * w * c)
      throw std::invalid_argument("FeatureGrid: value count does not match shape");
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument("FeatureGrid: non-finite entry");
  }

  static FeatureGrid flat(int pixels, int channels, std::vector<double> vals) {
    return FeatureGrid(pixels, 1, channels, std::move(vals));
  }

  int pixels() const { return height * width; }
  double at(int pixel, int channel) const {
    return values[static_cast<std::size_t>(pixel) * channels + channel];
  }
};

/// Differentiable score model: forward produces an n x m ScoreMatrix,
/// backward consumes the loss gradient with respect to the scores of the
/// most recent forward (exactly one outstanding forward per instance) and
/// returns the flat parameter gradient. Instances are single-threaded;
/// distinct instances may run on distinct threads.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual ScoreMatrix forward(const FeatureGrid& features) = 0;
  virtual std::vector<double> backward(const ScoreMatrix& score_gradient) = 0;

  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;
  virtual std::size_t parameter_count() const = 0;
  virtual int label_count() const = 0;

  /// Distance of the most recent forward from the nearest rectifier kink
  /// (minimum |hidden pre-activation|); +inf for models without kinks.
  /// The gradient checker resamples probes that land too close to one.
  virtual double kink_margin() const { return std::numeric_limits<double>::infinity(); }
};

/// scores = features . W + bias with W (d x m) drawn from a zero-mean
/// Gaussian of std 0.01 and bias 0, both seeded. Exact analytic gradients.
std::unique_ptr<Scorer> linear_scorer(int d, int m, unsigned init_seed);

/// Convolutional scorer over the feature grid; input channel count is m
/// (class-indicator features). channels > 0 selects conv -> rectifier ->
/// conv with that many hidden channels; channels = 0 is a single conv.
/// kernel_size must be odd; zero padding preserves the pixel count.
std::unique_ptr<Scorer> conv_scorer(int channels, int kernel_size, int m, unsigned init_seed);

/// Central-difference check of backward against probe_count randomly
/// chosen parameters. The scalar loss is a fixed random linear functional
/// of the scores. Probes whose perturbed forward lands within 10h of a
/// rectifier kink are resampled. Returns the maximum relative error.
double gradient_check(Scorer& scorer, const FeatureGrid& features, int probe_count, double h,
                      unsigned seed = 1234);

/// Negative control for gradient_check: forwards unchanged, backward
/// returns the true gradient with flipped sign (expected error ~= 2).
std::unique_ptr<Scorer> with_sign_flipped_backward(std::unique_ptr<Scorer> inner);

/// Checkpoint format: little-endian uint64 parameter count followed by
/// that many little-endian IEEE-754 doubles.
void save_parameters(const Scorer& scorer, const std::string& path);
void load_parameters(Scorer& scorer, const std::string& path);

}  // namespace ccnn
