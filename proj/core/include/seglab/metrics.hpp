#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seglab/label_map.hpp"

namespace seglab {

// Per-class confusion counts; rows are ground truth, columns prediction.
// Pixels whose truth is the ignore index are excluded entirely.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return classes_; }
  std::uint64_t at(int truth, int predicted) const {
    return m_[static_cast<size_t>(truth) * classes_ + predicted];
  }
  std::uint64_t total() const;

  void accumulate(const LabelMap& prediction, const LabelMap& truth);
  // Elementwise addition; merging per-image matrices in any order gives the
  // same result.
  void merge(const ConfusionMatrix& other);

  // intersection / union for one class; empty when the class appears in
  // neither truth nor prediction.
  std::optional<double> iou(int c) const;
  // Arithmetic mean of the defined per-class IoUs. With undefined_as_zero,
  // undefined classes count as zero instead of being excluded.
  double miou(bool undefined_as_zero = false) const;
  // Fraction of evaluated pixels whose ground truth is each class.
  std::vector<double> class_pixel_ratio() const;

 private:
  int classes_;
  std::vector<std::uint64_t> m_;
};

// Per-class IoU, mIoU, and pixel ratios, with mean +- population std across
// the contributing seeds (zero std for a single seed).
struct MetricsReport {
  std::vector<long> seeds;
  std::vector<double> iou_mean;      // per class; meaningful where iou_defined
  std::vector<double> iou_std;
  std::vector<bool> iou_defined;
  double miou_mean = 0.0;
  double miou_std = 0.0;
  std::vector<double> pixel_ratio;   // per class, averaged across seeds
};

MetricsReport report_from(const ConfusionMatrix& cm, long seed,
                          bool undefined_as_zero = false);

// Mean and population standard deviation across per-seed reports. All
// reports must cover the same class count; the list must be non-empty.
MetricsReport aggregate_seeds(const std::vector<MetricsReport>& reports);

}  // namespace seglab
