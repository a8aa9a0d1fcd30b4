#include "seglab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seglab {

namespace {

int reflect_index(int i, int n) {
  // symmetric reflection: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
  if (n == 1) return 0;
  const int period = 2 * n;
  int j = i % period;
  if (j < 0) j += period;
  return j < n ? j : period - 1 - j;
}

double luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

void clamp01(Tensor& t) {
  for (auto& x : t.values()) x = std::clamp(x, 0.0, 1.0);
}

void require_rgb(const Tensor& image, const char* who) {
  if (image.rank() != 3 || image.extent(0) != 3)
    throw std::invalid_argument(std::string(who) + ": expected [3,H,W] image, got " +
                                image.shape_str());
}

}  // namespace

Tensor reflect_pad(const Tensor& image, int min_h, int min_w) {
  const int c_n = image.extent(0), h = image.extent(1), w = image.extent(2);
  if (h >= min_h && w >= min_w) return image;
  const int oh = std::max(h, min_h), ow = std::max(w, min_w);
  Tensor out({c_n, oh, ow});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out.at(c, y, x) = image.at(c, reflect_index(y, h), reflect_index(x, w));
  return out;
}

LabelMap reflect_pad(const LabelMap& label, int min_h, int min_w) {
  if (label.h >= min_h && label.w >= min_w) return label;
  const int oh = std::max(label.h, min_h), ow = std::max(label.w, min_w);
  LabelMap out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out.at(y, x) = label.at(reflect_index(y, label.h), reflect_index(x, label.w));
  return out;
}

Tensor hflip(const Tensor& image) {
  const int c_n = image.extent(0), h = image.extent(1), w = image.extent(2);
  Tensor out({c_n, h, w});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = image.at(c, y, w - 1 - x);
  return out;
}

LabelMap hflip(const LabelMap& label) {
  LabelMap out(label.h, label.w);
  for (int y = 0; y < label.h; ++y)
    for (int x = 0; x < label.w; ++x) out.at(y, x) = label.at(y, label.w - 1 - x);
  return out;
}

Tensor apply_geometric(const Tensor& image, const GeoParams& geo, int crop_size) {
  Tensor padded = reflect_pad(image, crop_size, crop_size);
  const int c_n = padded.extent(0);
  Tensor out({c_n, crop_size, crop_size});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < crop_size; ++y)
      for (int x = 0; x < crop_size; ++x)
        out.at(c, y, x) = padded.at(c, geo.crop_y + y, geo.crop_x + x);
  return geo.flip ? hflip(out) : out;
}

LabelMap apply_geometric(const LabelMap& label, const GeoParams& geo, int crop_size) {
  LabelMap padded = reflect_pad(label, crop_size, crop_size);
  LabelMap out(crop_size, crop_size);
  for (int y = 0; y < crop_size; ++y)
    for (int x = 0; x < crop_size; ++x)
      out.at(y, x) = padded.at(geo.crop_y + y, geo.crop_x + x);
  return geo.flip ? hflip(out) : out;
}

WeakAugmentResult weak_augment(const Tensor& image, const LabelMap* label,
                               int crop_size, Rng& rng) {
  require_rgb(image, "weak_augment");
  if (crop_size <= 0) throw std::invalid_argument("weak_augment: bad crop size");
  if (label && (label->h != image.extent(1) || label->w != image.extent(2)))
    throw std::invalid_argument("weak_augment: label/image shape mismatch");

  const int ph = std::max(image.extent(1), crop_size);
  const int pw = std::max(image.extent(2), crop_size);
  GeoParams geo;
  geo.crop_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(ph - crop_size + 1)));
  geo.crop_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(pw - crop_size + 1)));
  geo.flip = rng.bernoulli(0.5);

  WeakAugmentResult out;
  out.image = apply_geometric(image, geo, crop_size);
  if (label) {
    out.label = apply_geometric(*label, geo, crop_size);
    out.has_label = true;
  }
  out.geo = geo;
  return out;
}

Tensor adjust_brightness(const Tensor& image, double factor) {
  Tensor out = image;
  for (auto& x : out.values()) x *= factor;
  clamp01(out);
  return out;
}

Tensor adjust_contrast(const Tensor& image, double factor) {
  require_rgb(image, "adjust_contrast");
  const size_t plane = image.size() / 3;
  double mean = 0.0;
  for (size_t i = 0; i < plane; ++i)
    mean += luminance(image[i], image[plane + i], image[2 * plane + i]);
  mean /= static_cast<double>(plane);
  Tensor out = image;
  for (auto& x : out.values()) x = (x - mean) * factor + mean;
  clamp01(out);
  return out;
}

Tensor adjust_saturation(const Tensor& image, double factor) {
  require_rgb(image, "adjust_saturation");
  const size_t plane = image.size() / 3;
  Tensor out = image;
  for (size_t i = 0; i < plane; ++i) {
    const double lum = luminance(image[i], image[plane + i], image[2 * plane + i]);
    for (int c = 0; c < 3; ++c) {
      const size_t j = c * plane + i;
      out[j] = lum + (image[j] - lum) * factor;
    }
  }
  clamp01(out);
  return out;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx <= 0.0 ? 0.0 : d / mx;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

Tensor adjust_hue(const Tensor& image, double shift) {
  require_rgb(image, "adjust_hue");
  const size_t plane = image.size() / 3;
  Tensor out = image;
  for (size_t i = 0; i < plane; ++i) {
    double h, s, v;
    rgb_to_hsv(image[i], image[plane + i], image[2 * plane + i], h, s, v);
    h += shift;
    h -= std::floor(h);
    hsv_to_rgb(h, s, v, out[i], out[plane + i], out[2 * plane + i]);
  }
  clamp01(out);
  return out;
}

Tensor to_grayscale(const Tensor& image) {
  require_rgb(image, "to_grayscale");
  const size_t plane = image.size() / 3;
  Tensor out = image;
  for (size_t i = 0; i < plane; ++i) {
    const double lum = luminance(image[i], image[plane + i], image[2 * plane + i]);
    out[i] = out[plane + i] = out[2 * plane + i] = lum;
  }
  return out;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = static_cast<int>(std::ceil(2.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;

  const int c_n = image.extent(0), h = image.extent(1), w = image.extent(2);
  auto clampi = [](int i, int n) { return std::clamp(i, 0, n - 1); };
  Tensor tmp({c_n, h, w});
  for (int c = 0; c < c_n; ++c)  // horizontal pass
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * image.at(c, y, clampi(x + i, w));
        tmp.at(c, y, x) = acc;
      }
  Tensor out({c_n, h, w});
  for (int c = 0; c < c_n; ++c)  // vertical pass
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(c, clampi(y + i, h), x);
        out.at(c, y, x) = acc;
      }
  return out;
}

Tensor strong_augment(const Tensor& image, Rng& rng, const StrongAugmentParams& p) {
  require_rgb(image, "strong_augment");
  Tensor out = image;
  if (rng.bernoulli(p.jitter_p)) {
    // fixed sub-op order: brightness, contrast, saturation, hue
    out = adjust_brightness(out, rng.uniform(1.0 - p.brightness, 1.0 + p.brightness));
    out = adjust_contrast(out, rng.uniform(1.0 - p.contrast, 1.0 + p.contrast));
    out = adjust_saturation(out, rng.uniform(1.0 - p.saturation, 1.0 + p.saturation));
    out = adjust_hue(out, rng.uniform(-p.hue, p.hue));
  }
  if (rng.bernoulli(p.grayscale_p)) out = to_grayscale(out);
  if (rng.bernoulli(p.blur_p))
    out = gaussian_blur(out, rng.uniform(p.blur_sigma_min, p.blur_sigma_max));
  clamp01(out);
  return out;
}

AugmentedViews make_views(const Tensor& image, const LabelMap* label, int crop_size,
                          Rng& weak_rng, Rng& strong_rng,
                          const StrongAugmentParams& params) {
  WeakAugmentResult weak = weak_augment(image, label, crop_size, weak_rng);
  AugmentedViews out;
  out.strong = strong_augment(weak.image, strong_rng, params);
  out.weak = std::move(weak.image);
  out.label = std::move(weak.label);
  out.has_label = weak.has_label;
  out.geo = weak.geo;
  return out;
}

}  // namespace seglab
