#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace seglab {

// Reserved label value marking pixels excluded from losses and metrics.
inline constexpr std::uint8_t kIgnoreIndex = 255;

// Per-pixel class-index image. Entries are class indices in [0, C) or
// kIgnoreIndex.
struct LabelMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> v;

  LabelMap() = default;
  LabelMap(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * static_cast<size_t>(w_), fill) {
    if (h_ <= 0 || w_ <= 0) throw std::invalid_argument("LabelMap: non-positive extent");
  }

  std::uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  std::size_t pixels() const { return v.size(); }
  bool same_shape(const LabelMap& o) const { return h == o.h && w == o.w; }

  bool operator==(const LabelMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

// Per-pixel binary mask; 1 selects the source image in a composition.
struct ClassMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> v;

  ClassMask() = default;
  ClassMask(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * static_cast<size_t>(w_), fill) {
    if (h_ <= 0 || w_ <= 0) throw std::invalid_argument("ClassMask: non-positive extent");
  }

  std::uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  std::size_t pixels() const { return v.size(); }

  std::size_t count_ones() const {
    std::size_t n = 0;
    for (auto b : v) n += b;
    return n;
  }
};

}  // namespace seglab
