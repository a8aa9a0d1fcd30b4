#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace seglab {

// Dense row-major N-d value container. The single numeric currency of the
// pipeline; shapes are small (rank <= 4) and extents are validated on
// construction.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)), v_(checked_size(shape_), fill) {}

  Tensor(std::vector<int> shape, std::vector<double> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (v_.size() != checked_size(shape_))
      throw std::invalid_argument("Tensor: values length does not match shape");
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int d) const { return shape_[static_cast<size_t>(d)]; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  // Indexed access for up to rank 4; used by tests and cold paths.
  double& at(int a) { return v_[idx({a})]; }
  double& at(int a, int b) { return v_[idx({a, b})]; }
  double& at(int a, int b, int c) { return v_[idx({a, b, c})]; }
  double& at(int a, int b, int c, int d) { return v_[idx({a, b, c, d})]; }
  double at(int a) const { return v_[idx({a})]; }
  double at(int a, int b) const { return v_[idx({a, b})]; }
  double at(int a, int b, int c) const { return v_[idx({a, b, c})]; }
  double at(int a, int b, int c, int d) const { return v_[idx({a, b, c, d})]; }

  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
      if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent");
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

 private:
  std::size_t idx(std::initializer_list<int> ix) const {
    if (ix.size() != shape_.size())
      throw std::out_of_range("Tensor: index rank mismatch");
    std::size_t flat = 0;
    auto it = ix.begin();
    for (size_t d = 0; d < shape_.size(); ++d, ++it) {
      if (*it < 0 || *it >= shape_[d])
        throw std::out_of_range("Tensor: index out of bounds");
      flat = flat * static_cast<std::size_t>(shape_[d]) + static_cast<std::size_t>(*it);
    }
    return flat;
  }

  std::vector<int> shape_;
  std::vector<double> v_;
};

// Throws if any entry is NaN or infinite. Forward and backward passes call
// this on everything they produce; a non-finite value is a hard error.
void require_finite(const Tensor& t, const char* what);
void require_finite(double x, const char* what);

}  // namespace seglab
