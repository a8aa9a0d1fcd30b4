#include "seglab/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seglab {

std::vector<std::uint8_t> present_classes(const LabelMap& label) {
  bool seen[256] = {};
  for (std::uint8_t c : label.v) seen[c] = true;
  std::vector<std::uint8_t> out;
  for (int c = 0; c < 256; ++c)
    if (seen[c] && c != kIgnoreIndex) out.push_back(static_cast<std::uint8_t>(c));
  return out;
}

namespace {

// Uniform k-subset via partial Fisher-Yates on the (sorted) candidate list.
std::vector<std::uint8_t> sample_subset(std::vector<std::uint8_t> pool, size_t k, Rng& rng) {
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::vector<std::uint8_t> select_classmix_classes(
    const std::vector<std::uint8_t>& present, Rng& rng) {
  const size_t k = present.size() / 2;
  if (k == 0) return {};
  return sample_subset(present, k, rng);
}

std::vector<std::uint8_t> select_supmix_classes(
    const std::vector<std::uint8_t>& present, std::uint8_t background, Rng& rng) {
  std::vector<std::uint8_t> pool;
  for (std::uint8_t c : present)
    if (c != background) pool.push_back(c);
  if (pool.empty()) return {};
  const size_t k = std::max<size_t>(1, pool.size() / 2);
  return sample_subset(std::move(pool), k, rng);
}

ClassMask build_mask(const LabelMap& label, const std::vector<std::uint8_t>& selected) {
  bool member[256] = {};
  for (std::uint8_t c : selected) member[c] = true;
  member[kIgnoreIndex] = false;
  ClassMask mask(label.h, label.w);
  for (size_t i = 0; i < label.v.size(); ++i) mask.v[i] = member[label.v[i]] ? 1 : 0;
  return mask;
}

MixResult compose(const Tensor& src_img, const LabelMap& src_lbl,
                  const Tensor& dst_img, const LabelMap& dst_lbl,
                  const ClassMask& mask) {
  if (!src_img.same_shape(dst_img))
    throw std::invalid_argument("compose: image shape mismatch");
  if (!src_lbl.same_shape(dst_lbl))
    throw std::invalid_argument("compose: label shape mismatch");
  if (src_img.rank() != 3 || src_img.extent(1) != src_lbl.h ||
      src_img.extent(2) != src_lbl.w || mask.h != src_lbl.h || mask.w != src_lbl.w)
    throw std::invalid_argument("compose: image/label/mask shape mismatch");

  const int c_n = src_img.extent(0);
  const size_t plane = src_lbl.pixels();
  MixResult out;
  out.image = dst_img;
  out.label = dst_lbl;
  out.mask = mask;
  for (size_t i = 0; i < plane; ++i) {
    if (!mask.v[i]) continue;
    out.label.v[i] = src_lbl.v[i];
    for (int c = 0; c < c_n; ++c)
      out.image.values()[c * plane + i] = src_img.values()[c * plane + i];
  }
  return out;
}

MixResult classmix(const Tensor& x_a, const Tensor& x_b, SegModel& model, Rng& rng) {
  if (!x_a.same_shape(x_b)) throw std::invalid_argument("classmix: shape mismatch");
  Graph g;
  Graph::NoGrad guard(g);
  const LabelMap y_a = argmax_labels(g.value(model.forward(g, x_a).logits));
  const LabelMap y_b = argmax_labels(g.value(model.forward(g, x_b).logits));
  const auto selected = select_classmix_classes(present_classes(y_a), rng);
  const ClassMask mask = build_mask(y_a, selected);
  MixResult out = compose(x_a, y_a, x_b, y_b, mask);
  out.selected = selected;
  return out;
}

MixResult supmix(const Tensor& x_l, const LabelMap& y_l, const Tensor& x_strong,
                 const LabelMap& y_pseudo, std::uint8_t background, Rng& rng) {
  for (std::uint8_t c : y_l.v)
    if (c == kIgnoreIndex)
      throw std::invalid_argument("supmix: ground-truth label contains ignore pixels");
  const auto selected = select_supmix_classes(present_classes(y_l), background, rng);
  const ClassMask mask = build_mask(y_l, selected);
  MixResult out = compose(x_l, y_l, x_strong, y_pseudo, mask);
  out.selected = selected;
  return out;
}

Rect sample_cutmix_rect(int h, int w, Rng& rng, double rmin, double rmax) {
  const double ratio = rng.uniform(rmin, rmax);
  const int rh = static_cast<int>(std::lround(h * std::sqrt(ratio)));
  const int rw = static_cast<int>(std::lround(w * std::sqrt(ratio)));
  const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
  const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
  Rect r;
  r.y0 = std::max(0, cy - rh / 2);
  r.x0 = std::max(0, cx - rw / 2);
  r.y1 = std::min(h, cy - rh / 2 + rh);
  r.x1 = std::min(w, cx - rw / 2 + rw);
  return r;
}

ClassMask rect_mask(int h, int w, const Rect& r) {
  ClassMask mask(h, w);
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) mask.at(y, x) = 1;
  return mask;
}

MixResult cutmix(const Tensor& x_a, const LabelMap& y_a, const Tensor& x_b,
                 const LabelMap& y_b, Rng& rng, double rmin, double rmax) {
  const Rect r = sample_cutmix_rect(y_a.h, y_a.w, rng, rmin, rmax);
  return compose(x_a, y_a, x_b, y_b, rect_mask(y_a.h, y_a.w, r));
}

}  // namespace seglab
