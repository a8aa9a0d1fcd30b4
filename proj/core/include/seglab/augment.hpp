#pragma once

#include "seglab/label_map.hpp"
#include "seglab/rng.hpp"
#include "seglab/tensor.hpp"

namespace seglab {

// Geometric parameters of a weak augmentation, recorded so weak and strong
// views (and the label map) stay pixel-aligned.
struct GeoParams {
  int crop_y = 0;
  int crop_x = 0;
  bool flip = false;
};

struct WeakAugmentResult {
  Tensor image;
  LabelMap label;  // empty when no label was supplied
  bool has_label = false;
  GeoParams geo;
};

// Photometric strong-augmentation parameters. Jitter magnitudes follow the
// multiplicative [1-m, 1+m] convention; hue shifts by a fraction of the hue
// circle.
struct StrongAugmentParams {
  double jitter_p = 0.8;
  double brightness = 0.5;
  double contrast = 0.5;
  double saturation = 0.5;
  double hue = 0.25;
  double grayscale_p = 0.2;
  double blur_p = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
};

// Weak and strong views of one sample sharing identical geometry. The label
// map sees only the geometric part; photometric ops never touch it.
struct AugmentedViews {
  Tensor weak;
  Tensor strong;
  LabelMap label;
  bool has_label = false;
  GeoParams geo;
};

// Pads with symmetric reflection until the image is at least min_h x min_w.
Tensor reflect_pad(const Tensor& image, int min_h, int min_w);
LabelMap reflect_pad(const LabelMap& label, int min_h, int min_w);

Tensor hflip(const Tensor& image);
LabelMap hflip(const LabelMap& label);

// Applies recorded geometric parameters (pad, crop, optional flip) to a
// source image/label; weak_augment is this with fresh random parameters.
Tensor apply_geometric(const Tensor& image, const GeoParams& geo, int crop_size);
LabelMap apply_geometric(const LabelMap& label, const GeoParams& geo, int crop_size);

// Random crop to crop_size (reflect-padded first if smaller) plus horizontal
// flip with probability 0.5; image and label are transformed identically.
WeakAugmentResult weak_augment(const Tensor& image, const LabelMap* label,
                               int crop_size, Rng& rng);

// Color jitter -> grayscale -> blur, each gated on its probability. Expects
// channel-first RGB in [0,1]; output is clamped back to [0,1].
Tensor strong_augment(const Tensor& image, Rng& rng,
                      const StrongAugmentParams& params = {});

// Weak view, then the photometric strong pass on top of the same crop.
AugmentedViews make_views(const Tensor& image, const LabelMap* label, int crop_size,
                          Rng& weak_rng, Rng& strong_rng,
                          const StrongAugmentParams& params = {});

// Photometric primitives (exposed for tests).
Tensor adjust_brightness(const Tensor& image, double factor);
Tensor adjust_contrast(const Tensor& image, double factor);
Tensor adjust_saturation(const Tensor& image, double factor);
Tensor adjust_hue(const Tensor& image, double shift);
Tensor to_grayscale(const Tensor& image);
Tensor gaussian_blur(const Tensor& image, double sigma);

}  // namespace seglab
