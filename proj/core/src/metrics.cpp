#include "seglab/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace seglab {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes),
      m_(static_cast<size_t>(num_classes) * static_cast<size_t>(num_classes), 0) {
  if (num_classes <= 0) throw std::invalid_argument("ConfusionMatrix: bad class count");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto x : m_) n += x;
  return n;
}

void ConfusionMatrix::accumulate(const LabelMap& prediction, const LabelMap& truth) {
  if (!prediction.same_shape(truth))
    throw std::invalid_argument("accumulate: shape mismatch");
  for (size_t i = 0; i < truth.v.size(); ++i) {
    const std::uint8_t t = truth.v[i];
    if (t == kIgnoreIndex) continue;
    const std::uint8_t p = prediction.v[i];
    if (t >= classes_ || p >= classes_)
      throw std::out_of_range("accumulate: class out of range");
    ++m_[static_cast<size_t>(t) * classes_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_)
    throw std::invalid_argument("merge: class count mismatch");
  for (size_t i = 0; i < m_.size(); ++i) m_[i] += other.m_[i];
}

std::optional<double> ConfusionMatrix::iou(int c) const {
  std::uint64_t row = 0, col = 0;
  for (int i = 0; i < classes_; ++i) {
    row += at(c, i);
    col += at(i, c);
  }
  const std::uint64_t inter = at(c, c);
  const std::uint64_t uni = row + col - inter;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double ConfusionMatrix::miou(bool undefined_as_zero) const {
  double acc = 0.0;
  int counted = 0;
  for (int c = 0; c < classes_; ++c) {
    const auto v = iou(c);
    if (v) {
      acc += *v;
      ++counted;
    } else if (undefined_as_zero) {
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : acc / counted;
}

std::vector<double> ConfusionMatrix::class_pixel_ratio() const {
  const double n = static_cast<double>(total());
  std::vector<double> out(classes_, 0.0);
  if (n == 0.0) return out;
  for (int c = 0; c < classes_; ++c) {
    std::uint64_t row = 0;
    for (int i = 0; i < classes_; ++i) row += at(c, i);
    out[c] = static_cast<double>(row) / n;
  }
  return out;
}

MetricsReport report_from(const ConfusionMatrix& cm, long seed, bool undefined_as_zero) {
  MetricsReport r;
  r.seeds = {seed};
  const int n = cm.num_classes();
  r.iou_mean.resize(n, 0.0);
  r.iou_std.resize(n, 0.0);
  r.iou_defined.resize(n, false);
  for (int c = 0; c < n; ++c) {
    const auto v = cm.iou(c);
    if (v) {
      r.iou_mean[c] = *v;
      r.iou_defined[c] = true;
    } else if (undefined_as_zero) {
      r.iou_defined[c] = true;
    }
  }
  r.miou_mean = cm.miou(undefined_as_zero);
  r.pixel_ratio = cm.class_pixel_ratio();
  return r;
}

MetricsReport aggregate_seeds(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_seeds: empty report list");
  const size_t n = reports.front().iou_mean.size();
  for (const auto& r : reports)
    if (r.iou_mean.size() != n)
      throw std::invalid_argument("aggregate_seeds: class count mismatch");

  MetricsReport out;
  out.iou_mean.resize(n, 0.0);
  out.iou_std.resize(n, 0.0);
  out.iou_defined.resize(n, false);
  out.pixel_ratio.resize(n, 0.0);

  for (const auto& r : reports)
    for (long s : r.seeds) out.seeds.push_back(s);

  for (size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    int counted = 0;
    for (const auto& r : reports) {
      if (!r.iou_defined[c]) continue;
      sum += r.iou_mean[c];
      ++counted;
    }
    if (counted == 0) continue;
    const double mean = sum / counted;
    double var = 0.0;
    for (const auto& r : reports)
      if (r.iou_defined[c]) var += (r.iou_mean[c] - mean) * (r.iou_mean[c] - mean);
    out.iou_mean[c] = mean;
    out.iou_std[c] = std::sqrt(var / counted);  // population std
    out.iou_defined[c] = true;
  }

  double msum = 0.0;
  for (const auto& r : reports) msum += r.miou_mean;
  out.miou_mean = msum / reports.size();
  double mvar = 0.0;
  for (const auto& r : reports)
    mvar += (r.miou_mean - out.miou_mean) * (r.miou_mean - out.miou_mean);
  out.miou_std = std::sqrt(mvar / reports.size());

  for (size_t c = 0; c < n; ++c) {
    double acc = 0.0;
    for (const auto& r : reports) acc += r.pixel_ratio[c];
    out.pixel_ratio[c] = acc / reports.size();
  }
  return out;
}

}  // namespace seglab
