#include "ccnn/synthdata.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace ccnn {

std::set<int> tags_of(const std::vector<int>& mask) {
  std::set<int> tags;
  for (int v : mask)
    if (v != 0) tags.insert(v);
  return tags;
}

std::vector<SynthExample> generate(int count, int grid_side, int m, double noise_std,
                                   unsigned seed) {
  if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
  if (grid_side < 4) throw std::invalid_argument("generate: grid_side must be >= 4");
  if (m < 2) throw std::invalid_argument("generate: m must be >= 2");
  if (noise_std < 0.0) throw std::invalid_argument("generate: noise_std must be >= 0");

  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> rect_count_dist(1, std::min(3, m - 1));
  std::uniform_int_distribution<int> coord(0, grid_side - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int n = grid_side * grid_side;
  std::vector<SynthExample> out;
  out.reserve(count);

  std::vector<int> labels_pool(m - 1);
  for (int l = 1; l < m; ++l) labels_pool[l - 1] = l;

  for (int e = 0; e < count; ++e) {
    std::vector<int> mask(n, 0);

    // distinct foreground labels for this scene's rectangles
    std::vector<int> pool = labels_pool;
    std::shuffle(pool.begin(), pool.end(), rng);
    const int rects = rect_count_dist(rng);

    for (int r = 0; r < rects; ++r) {
      const int label = pool[r];
      // rectangle side lengths in [2, grid_side/2 + 1] keep scenes mixed
      // between small and large objects
      std::uniform_int_distribution<int> side(2, grid_side / 2 + 1);
      const int hgt = side(rng);
      const int wid = side(rng);
      const int y0 = std::min(coord(rng), grid_side - hgt);
      const int x0 = std::min(coord(rng), grid_side - wid);
      for (int y = y0; y < y0 + hgt; ++y)
        for (int x = x0; x < x0 + wid; ++x) mask[y * grid_side + x] = label;
    }

    // tags and size bits are recomputed from the final mask, so labels
    // fully painted over drop out
    std::set<int> tags = tags_of(mask);
    std::map<int, bool> size_bits;
    for (int tag : tags) {
      const long area = std::count(mask.begin(), mask.end(), tag);
      size_bits[tag] = area * 10 > n;  // area > 10% of pixels
    }

    std::vector<double> features(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < m; ++c)
        features[static_cast<std::size_t>(i) * m + c] =
            (mask[i] == c ? 1.0 : 0.0) + noise_std * noise(rng);

    out.push_back(SynthExample{FeatureGrid(grid_side, grid_side, m, std::move(features)),
                               std::move(mask), std::move(tags), std::move(size_bits),
                               /*has_size_bits=*/true, /*id=*/e});
  }
  return out;
}

std::vector<int> predict_mask(const LabelDistribution& p) {
  std::vector<int> mask(p.pixels());
  for (int i = 0; i < p.pixels(); ++i) {
    int best = 0;
    double best_v = p(i, 0);
    for (int l = 1; l < p.labels(); ++l)
      if (p(i, l) > best_v) {  // strict: ties keep the lowest label
        best_v = p(i, l);
        best = l;
      }
    mask[i] = best;
  }
  return mask;
}

IouReport mean_iou(const std::vector<std::vector<int>>& pred_masks,
                   const std::vector<std::vector<int>>& gt_masks, int m) {
  if (pred_masks.size() != gt_masks.size())
    throw std::invalid_argument("mean_iou: mask count mismatch");
  if (m < 2) throw std::invalid_argument("mean_iou: m must be >= 2");

  std::vector<long> inter(m, 0), uni(m, 0);
  for (std::size_t e = 0; e < pred_masks.size(); ++e) {
    const auto& pred = pred_masks[e];
    const auto& gt = gt_masks[e];
    if (pred.size() != gt.size()) throw std::invalid_argument("mean_iou: mask shape mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int pc = pred[i], gc = gt[i];
      if (pc < 0 || pc >= m || gc < 0 || gc >= m)
        throw std::invalid_argument("mean_iou: label out of range");
      if (pc == gc) {
        ++inter[pc];
        ++uni[pc];
      } else {
        ++uni[pc];
        ++uni[gc];
      }
    }
  }

  IouReport report;
  report.per_class.assign(m, -1.0);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < m; ++c) {
    if (uni[c] == 0) continue;  // absent from both pred and gt: excluded
    report.per_class[c] = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    sum += report.per_class[c];
    ++counted;
  }
  report.mean = counted > 0 ? sum / counted : 0.0;
  return report;
}

}  // namespace ccnn
