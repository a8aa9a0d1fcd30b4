#pragma once

#include <vector>

#include "seglab/label_map.hpp"
#include "seglab/model.hpp"
#include "seglab/rng.hpp"
#include "seglab/tensor.hpp"

namespace seglab {

// Output of a cut-and-paste composition. At mask-1 pixels the image and
// label come from the source; at mask-0 pixels from the destination.
struct MixResult {
  Tensor image;
  LabelMap label;
  ClassMask mask;
  std::vector<std::uint8_t> selected;  // classes behind the mask (empty for cutmix)
};

// Distinct non-ignored class values, ascending.
std::vector<std::uint8_t> present_classes(const LabelMap& label);

// Uniformly samples floor(n/2) of the present classes.
std::vector<std::uint8_t> select_classmix_classes(
    const std::vector<std::uint8_t>& present, Rng& rng);

// Drops the background class, then uniformly samples max(1, floor(n/2)) of
// the remainder; empty remainder gives an empty selection.
std::vector<std::uint8_t> select_supmix_classes(
    const std::vector<std::uint8_t>& present, std::uint8_t background, Rng& rng);

// mask = 1 exactly where the label's class is in selected; ignored pixels
// are never members.
ClassMask build_mask(const LabelMap& label, const std::vector<std::uint8_t>& selected);

// Per-pixel select of (image, label) pairs under the mask; bit-exact.
MixResult compose(const Tensor& src_img, const LabelMap& src_lbl,
                  const Tensor& dst_img, const LabelMap& dst_lbl,
                  const ClassMask& mask);

// Pseudo-labels both images through the model, selects half of the classes
// predicted in x_a, and pastes their regions (image and pseudo-label) onto
// x_b.
MixResult classmix(const Tensor& x_a, const Tensor& x_b, SegModel& model, Rng& rng);

// Pastes the selected ground-truth class regions of a labeled sample onto a
// strong unlabeled view and its pseudo-label. The mask comes from the ground
// truth only, so pasted pixels always carry their true class and are never
// ignored; y_l must not contain the ignore index.
MixResult supmix(const Tensor& x_l, const LabelMap& y_l, const Tensor& x_strong,
                 const LabelMap& y_pseudo, std::uint8_t background, Rng& rng);

// Axis-aligned rectangle with area ratio uniform in [rmin, rmax], centered
// uniformly and clipped to the image bounds. Half-open coordinates.
struct Rect {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  long area() const { return static_cast<long>(y1 - y0) * (x1 - x0); }
};

Rect sample_cutmix_rect(int h, int w, Rng& rng, double rmin = 0.1, double rmax = 0.5);
ClassMask rect_mask(int h, int w, const Rect& r);

// Cuts a random rectangle from (x_a, y_a) and pastes it onto (x_b, y_b).
MixResult cutmix(const Tensor& x_a, const LabelMap& y_a, const Tensor& x_b,
                 const LabelMap& y_b, Rng& rng, double rmin = 0.1, double rmax = 0.5);

}  // namespace seglab
