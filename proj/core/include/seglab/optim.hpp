#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "seglab/graph.hpp"

namespace seglab {

// Poly decay: lr_init * (1 - step/total_steps)^power. Strictly decreasing on
// [0, total_steps], reaching exactly zero at the end; steps past the end
// clamp to zero.
struct PolySchedule {
  double lr_init = 0.0;
  long total_steps = 1;
  double power = 0.9;

  PolySchedule() = default;
  PolySchedule(double lr, long steps, double pw = 0.9)
      : lr_init(lr), total_steps(steps), power(pw) {
    if (lr < 0.0) throw std::invalid_argument("PolySchedule: negative lr_init");
    if (steps <= 0) throw std::invalid_argument("PolySchedule: non-positive step count");
  }
};

inline double poly_lr(long step, const PolySchedule& s) {
  if (step < 0) throw std::invalid_argument("poly_lr: negative step");
  if (step >= s.total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(s.total_steps);
  return s.lr_init * std::pow(frac, s.power);
}

// SGD with momentum and decoupled-from-nothing weight decay folded into the
// gradient:  g' = g + wd*p;  v = m*v + g';  p = p - lr*v.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Param*> params, double momentum = 0.9,
               double weight_decay = 1e-4)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (const Param* p : params_) velocity_.emplace_back(p->value.shape(), 0.0);
  }

  void step(double lr) {
    if (lr < 0.0) throw std::invalid_argument("sgd: negative learning rate");
    if (last_lr_ >= 0.0 && lr > last_lr_)
      throw std::logic_error("sgd: learning rate increased across steps");
    last_lr_ = lr;
    for (size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      Tensor& v = velocity_[i];
      if (!p.grad.same_shape(p.value) || !v.same_shape(p.value))
        throw std::invalid_argument("sgd: shape mismatch for " + p.name);
      for (size_t j = 0; j < v.size(); ++j) {
        const double g = p.grad[j] + weight_decay_ * p.value[j];
        v[j] = momentum_ * v[j] + g;
        p.value[j] -= lr * v[j];
      }
      require_finite(p.value, "sgd parameter");
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> velocity_;
  double momentum_;
  double weight_decay_;
  double last_lr_ = -1.0;
};

}  // namespace seglab
