#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seglab/label_map.hpp"
#include "seglab/rng.hpp"
#include "seglab/tensor.hpp"

namespace seglab {

class Graph;

// A named trainable tensor with a persistent gradient buffer. Owned by the
// model; graphs bind to it per step and flush gradients on backward.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

  void zero_grad() { grad.fill(0.0); }
};

// Handle to a node in a Graph. Cheap to copy; invalid handles compare false.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  explicit operator bool() const { return g != nullptr && id >= 0; }
  const Tensor& value() const;
  double scalar() const;
};

// Reverse-mode tape. Ops evaluate eagerly and record a backward closure;
// backward() sweeps nodes in reverse creation order (a valid topological
// order, since an op can only consume already-created nodes). Tensors are
// immutable once produced; construction and backward are single-threaded.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----
  Var constant(Tensor t);
  Var input(Tensor t, bool requires_grad);
  Var param(Param& p);

  // ---- ops ----
  // Cross-correlation of input [Cin,H,W] with kernel [Cout,Cin,k,k] plus an
  // optional bias [Cout]; stride >= 1, zero padding.
  Var conv2d(Var in, Var kernel, Var bias, int stride, int padding);
  Var relu(Var x);
  Var sigmoid(Var x);
  // Bilinear 2x upsample, half-pixel centers, border-clamped.
  Var upsample2x(Var x);
  // Zeroes entries with probability p under a seeded mask and rescales the
  // survivors by 1/(1-p). Identity when training is false or p == 0.
  Var dropout(Var x, double p, bool training, Rng& rng);
  Var add(Var a, Var b);
  Var scale(Var a, double c);
  Var sum(Var x);
  Var mean(Var x);
  // Mean cross entropy over non-ignored pixels; 0 (with zero gradient) when
  // every pixel is ignored.
  Var softmax_ce(Var logits, const LabelMap& target,
                 std::uint8_t ignore_index = kIgnoreIndex);
  // Mean binary cross entropy of probability entries against a constant 0/1
  // target; inputs are clamped to [eps, 1-eps] before the logarithm.
  Var bce(Var pred, double target, double eps = 1e-7);
  // Value copy that blocks gradient flow.
  Var detach(Var x);

  // ---- engine ----
  // Accumulates d(loss)/d(leaf) into every bound Param's grad buffer. The
  // loss must be scalar. May be called once per graph.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id].val; }
  // Gradient of the last backward() w.r.t. v; empty tensor if none flowed.
  const Tensor& gradient(Var v) const { return nodes_[v.id].grad; }

  std::size_t node_count() const { return nodes_.size(); }

  // RAII guard: ops created while one is alive track no gradients.
  class NoGrad {
   public:
    explicit NoGrad(Graph& g) : g_(g), prev_(g.grad_enabled_) { g_.grad_enabled_ = false; }
    ~NoGrad() { g_.grad_enabled_ = prev_; }

   private:
    Graph& g_;
    bool prev_;
  };

 private:
  friend struct Var;

  struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void(Graph&, const Node&)> back;  // empty for leaves
  };

  Var make(Tensor val, bool requires_grad,
           std::function<void(Graph&, const Node&)> back);
  Tensor& grad_buf(int id);
  bool wants_grad(Var v) const { return grad_enabled_ && nodes_[v.id].requires_grad; }

  std::deque<Node> nodes_;
  std::vector<std::pair<Param*, int>> bindings_;
  std::unordered_map<const Param*, int> param_cache_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

// Forward shape of a square conv: floor((extent + 2*pad - k) / stride) + 1.
int conv_out_extent(int extent, int k, int stride, int pad);

// Per-pixel argmax over the class dimension of [C,H,W] logits; ties resolve
// to the lowest class index.
LabelMap argmax_labels(const Tensor& logits);

}  // namespace seglab
