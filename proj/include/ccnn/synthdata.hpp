#pragma once

#include <map>
#include <set>
#include <vector>

#include "ccnn/scorer.hpp"

namespace ccnn {

/// One procedural weak-segmentation scene: noisy class-indicator features,
/// the ground-truth per-pixel mask, the image-level tag set (exactly the
/// labels occurring in the mask), and per-tag 1-bit size labels (area
/// above 10% of the pixel count).
struct SynthExample {
  FeatureGrid features;
  std::vector<int> mask;        // ground-truth label per pixel
  std::set<int> tags;           // foreground labels present (label 0 excluded)
  std::map<int, bool> size_bits;  // tag -> occupies more than 10% of pixels
  bool has_size_bits = true;
  int id = 0;
};

/// Deterministic scene generator: each example places 1-3 axis-aligned
/// rectangles of distinct foreground labels on background (later rectangles
/// overwrite earlier ones); features are one-hot(label) + Gaussian noise
/// of the given std, so d = m channels.
std::vector<SynthExample> generate(int count, int grid_side, int m, double noise_std,
                                   unsigned seed);

/// Argmax label per pixel, lowest label index winning ties.
std::vector<int> predict_mask(const LabelDistribution& p);

/// Jaccard index per class, aggregated over all mask pairs:
/// |pred=c and gt=c| / |pred=c or gt=c|. Classes absent from both pred and
/// gt everywhere are excluded from the mean. Returns {per_class, mean};
/// excluded classes carry -1 in per_class.
struct IouReport {
  std::vector<double> per_class;
  double mean = 0.0;
};
IouReport mean_iou(const std::vector<std::vector<int>>& pred_masks,
                   const std::vector<std::vector<int>>& gt_masks, int m);

/// Extracts the foreground label set of a mask (tag recovery).
std::set<int> tags_of(const std::vector<int>& mask);

}  // namespace ccnn
