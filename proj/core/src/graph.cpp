#include "seglab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace seglab {

void require_finite(const Tensor& t, const char* what) {
  for (double x : t.values())
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("non-finite value in ") + what);
}

void require_finite(double x, const char* what) {
  if (!std::isfinite(x))
    throw std::runtime_error(std::string("non-finite value in ") + what);
}

const Tensor& Var::value() const { return g->value(*this); }

double Var::scalar() const {
  const Tensor& t = g->value(*this);
  if (t.size() != 1) throw std::logic_error("Var::scalar: tensor is not scalar");
  return t[0];
}

int conv_out_extent(int extent, int k, int stride, int pad) {
  return (extent + 2 * pad - k) / stride + 1;
}

Var Graph::make(Tensor val, bool requires_grad,
                std::function<void(Graph&, const Node&)> back) {
  if (backward_done_)
    throw std::logic_error("Graph: op created after backward()");
  require_finite(val, "op output");
  Node n;
  n.val = std::move(val);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.val.shape(), 0.0);
  return n.grad;
}

Var Graph::constant(Tensor t) { return make(std::move(t), false, {}); }

Var Graph::input(Tensor t, bool requires_grad) {
  return make(std::move(t), requires_grad, {});
}

Var Graph::param(Param& p) {
  if (auto it = param_cache_.find(&p); it != param_cache_.end())
    return Var{this, it->second};
  Var v = make(p.value, true, {});
  if (grad_enabled_) {
    bindings_.emplace_back(&p, v.id);
    param_cache_.emplace(&p, v.id);
  }
  return v;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

void conv_forward(const double* in, int ci_n, int h, int w, const double* ker,
                  int co_n, int k, int stride, int pad, const double* bias,
                  double* out, int oh, int ow) {
  for (int co = 0; co < co_n; ++co) {
    double* outp = out + static_cast<size_t>(co) * oh * ow;
    const double b = bias ? bias[co] : 0.0;
    std::fill(outp, outp + static_cast<size_t>(oh) * ow, b);
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* inp = in + static_cast<size_t>(ci) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = ker[((static_cast<size_t>(co) * ci_n + ci) * k + ky) * k + kx];
          // clip the output x range so every tap stays inside the input
          int x0 = 0;
          while (x0 < ow && x0 * stride + kx - pad < 0) ++x0;
          int x1 = ow;
          while (x1 > x0 && (x1 - 1) * stride + kx - pad >= w) --x1;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const double* irow = inp + static_cast<size_t>(iy) * w + (kx - pad);
            double* orow = outp + static_cast<size_t>(oy) * ow;
            if (stride == 1) {
              for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * irow[ox];
            } else {
              for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * irow[ox * stride];
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(double* din, int ci_n, int h, int w, const double* ker,
                         int co_n, int k, int stride, int pad,
                         const double* dout, int oh, int ow) {
  for (int co = 0; co < co_n; ++co) {
    const double* doutp = dout + static_cast<size_t>(co) * oh * ow;
    for (int ci = 0; ci < ci_n; ++ci) {
      double* dinp = din + static_cast<size_t>(ci) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = ker[((static_cast<size_t>(co) * ci_n + ci) * k + ky) * k + kx];
          int x0 = 0;
          while (x0 < ow && x0 * stride + kx - pad < 0) ++x0;
          int x1 = ow;
          while (x1 > x0 && (x1 - 1) * stride + kx - pad >= w) --x1;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            double* drow = dinp + static_cast<size_t>(iy) * w + (kx - pad);
            const double* dorow = doutp + static_cast<size_t>(oy) * ow;
            if (stride == 1) {
              for (int ox = x0; ox < x1; ++ox) drow[ox] += wv * dorow[ox];
            } else {
              for (int ox = x0; ox < x1; ++ox) drow[ox * stride] += wv * dorow[ox];
            }
          }
        }
      }
    }
  }
}

void conv_backward_kernel(const double* in, int ci_n, int h, int w,
                          double* dker, int co_n, int k, int stride, int pad,
                          const double* dout, int oh, int ow) {
  for (int co = 0; co < co_n; ++co) {
    const double* doutp = dout + static_cast<size_t>(co) * oh * ow;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* inp = in + static_cast<size_t>(ci) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          int x0 = 0;
          while (x0 < ow && x0 * stride + kx - pad < 0) ++x0;
          int x1 = ow;
          while (x1 > x0 && (x1 - 1) * stride + kx - pad >= w) --x1;
          double acc = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const double* irow = inp + static_cast<size_t>(iy) * w + (kx - pad);
            const double* dorow = doutp + static_cast<size_t>(oy) * ow;
            if (stride == 1) {
              for (int ox = x0; ox < x1; ++ox) acc += irow[ox] * dorow[ox];
            } else {
              for (int ox = x0; ox < x1; ++ox) acc += irow[ox * stride] * dorow[ox];
            }
          }
          dker[((static_cast<size_t>(co) * ci_n + ci) * k + ky) * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

Var Graph::conv2d(Var in, Var kernel, Var bias, int stride, int padding) {
  const Tensor& x = value(in);
  const Tensor& k = value(kernel);
  if (x.rank() != 3 || k.rank() != 4)
    throw std::invalid_argument("conv2d: input must be [C,H,W], kernel [Co,Ci,k,k]");
  if (k.extent(2) != k.extent(3))
    throw std::invalid_argument("conv2d: kernel must be square");
  if (k.extent(1) != x.extent(0))
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(k.extent(1)) +
                                " do not match input channels " + std::to_string(x.extent(0)));
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int ci_n = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int co_n = k.extent(0), kk = k.extent(2);
  const int oh = conv_out_extent(h, kk, stride, padding);
  const int ow = conv_out_extent(w, kk, stride, padding);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  const double* bias_ptr = nullptr;
  if (bias) {
    const Tensor& b = value(bias);
    if (b.rank() != 1 || b.extent(0) != co_n)
      throw std::invalid_argument("conv2d: bias shape mismatch");
    bias_ptr = b.data();
  }

  Tensor out({co_n, oh, ow});
  conv_forward(x.data(), ci_n, h, w, k.data(), co_n, kk, stride, padding,
               bias_ptr, out.data(), oh, ow);

  const bool rg = wants_grad(in) || wants_grad(kernel) || (bias && wants_grad(bias));
  const int in_id = in.id, k_id = kernel.id, b_id = bias ? bias.id : -1;
  auto back = [in_id, k_id, b_id, ci_n, h, w, co_n, kk, stride, padding, oh,
               ow](Graph& g, const Node& n) {
    const double* dout = n.grad.data();
    if (g.nodes_[in_id].requires_grad)
      conv_backward_input(g.grad_buf(in_id).data(), ci_n, h, w,
                          g.nodes_[k_id].val.data(), co_n, kk, stride, padding,
                          dout, oh, ow);
    if (g.nodes_[k_id].requires_grad)
      conv_backward_kernel(g.nodes_[in_id].val.data(), ci_n, h, w,
                           g.grad_buf(k_id).data(), co_n, kk, stride, padding,
                           dout, oh, ow);
    if (b_id >= 0 && g.nodes_[b_id].requires_grad) {
      double* db = g.grad_buf(b_id).data();
      for (int co = 0; co < co_n; ++co) {
        const double* plane = dout + static_cast<size_t>(co) * oh * ow;
        double acc = 0.0;
        for (size_t i = 0; i < static_cast<size_t>(oh) * ow; ++i) acc += plane[i];
        db[co] += acc;
      }
    }
  };
  return make(std::move(out), rg, std::move(back));
}

// ---------------------------------------------------------------------------
// elementwise and reductions
// ---------------------------------------------------------------------------

Var Graph::relu(Var x) {
  const Tensor& v = value(x);
  Tensor out(v.shape());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  const int xid = x.id;
  return make(std::move(out), wants_grad(x), [xid](Graph& g, const Node& n) {
    if (!g.nodes_[xid].requires_grad) return;
    const Tensor& v = g.nodes_[xid].val;
    double* dx = g.grad_buf(xid).data();
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i] > 0.0) dx[i] += n.grad[i];
  });
}

Var Graph::sigmoid(Var x) {
  const Tensor& v = value(x);
  Tensor out(v.shape());
  for (size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
  const int xid = x.id;
  return make(std::move(out), wants_grad(x), [xid](Graph& g, const Node& n) {
    if (!g.nodes_[xid].requires_grad) return;
    double* dx = g.grad_buf(xid).data();
    for (size_t i = 0; i < n.val.size(); ++i)
      dx[i] += n.val[i] * (1.0 - n.val[i]) * n.grad[i];
  });
}

Var Graph::upsample2x(Var x) {
  const Tensor& v = value(x);
  if (v.rank() != 3) throw std::invalid_argument("upsample2x: input must be [C,H,W]");
  const int c_n = v.extent(0), h = v.extent(1), w = v.extent(2);
  const int oh = h * 2, ow = w * 2;

  // half-pixel sampling: source coord = (out + 0.5)/2 - 0.5
  auto taps = [](int o, int extent, int& i0, int& i1, double& w1) {
    const double s = 0.5 * (o + 0.5) - 0.5;
    const double f = std::floor(s);
    i0 = static_cast<int>(f);
    w1 = s - f;
    i1 = std::min(i0 + 1, extent - 1);
    i0 = std::max(i0, 0);
  };

  Tensor out({c_n, oh, ow});
  for (int c = 0; c < c_n; ++c) {
    const double* inp = v.data() + static_cast<size_t>(c) * h * w;
    double* outp = out.data() + static_cast<size_t>(c) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      int y0, y1;
      double wy;
      taps(oy, h, y0, y1, wy);
      for (int ox = 0; ox < ow; ++ox) {
        int x0, x1;
        double wx;
        taps(ox, w, x0, x1, wx);
        const double top = inp[y0 * w + x0] * (1 - wx) + inp[y0 * w + x1] * wx;
        const double bot = inp[y1 * w + x0] * (1 - wx) + inp[y1 * w + x1] * wx;
        outp[oy * ow + ox] = top * (1 - wy) + bot * wy;
      }
    }
  }

  const int xid = x.id;
  return make(std::move(out), wants_grad(x),
              [xid, c_n, h, w, oh, ow, taps](Graph& g, const Node& n) {
                if (!g.nodes_[xid].requires_grad) return;
                double* dx = g.grad_buf(xid).data();
                for (int c = 0; c < c_n; ++c) {
                  double* dinp = dx + static_cast<size_t>(c) * h * w;
                  const double* doutp = n.grad.data() + static_cast<size_t>(c) * oh * ow;
                  for (int oy = 0; oy < oh; ++oy) {
                    int y0, y1;
                    double wy;
                    taps(oy, h, y0, y1, wy);
                    for (int ox = 0; ox < ow; ++ox) {
                      int x0, x1;
                      double wx;
                      taps(ox, w, x0, x1, wx);
                      const double d = doutp[oy * ow + ox];
                      dinp[y0 * w + x0] += d * (1 - wy) * (1 - wx);
                      dinp[y0 * w + x1] += d * (1 - wy) * wx;
                      dinp[y1 * w + x0] += d * wy * (1 - wx);
                      dinp[y1 * w + x1] += d * wy * wx;
                    }
                  }
                }
              });
}

Var Graph::dropout(Var x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  const Tensor& v = value(x);
  std::vector<double> mask(v.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor out(v.shape());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] * mask[i];
  const int xid = x.id;
  return make(std::move(out), wants_grad(x),
              [xid, mask = std::move(mask)](Graph& g, const Node& n) {
                if (!g.nodes_[xid].requires_grad) return;
                double* dx = g.grad_buf(xid).data();
                for (size_t i = 0; i < mask.size(); ++i) dx[i] += mask[i] * n.grad[i];
              });
}

Var Graph::add(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb))
    throw std::invalid_argument("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  Tensor out(va.shape());
  for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  const int aid = a.id, bid = b.id;
  return make(std::move(out), wants_grad(a) || wants_grad(b),
              [aid, bid](Graph& g, const Node& n) {
                for (int id : {aid, bid}) {
                  if (!g.nodes_[id].requires_grad) continue;
                  double* d = g.grad_buf(id).data();
                  for (size_t i = 0; i < n.grad.size(); ++i) d[i] += n.grad[i];
                }
              });
}

Var Graph::scale(Var a, double c) {
  const Tensor& va = value(a);
  Tensor out(va.shape());
  for (size_t i = 0; i < va.size(); ++i) out[i] = c * va[i];
  const int aid = a.id;
  return make(std::move(out), wants_grad(a), [aid, c](Graph& g, const Node& n) {
    if (!g.nodes_[aid].requires_grad) return;
    double* d = g.grad_buf(aid).data();
    for (size_t i = 0; i < n.grad.size(); ++i) d[i] += c * n.grad[i];
  });
}

Var Graph::sum(Var x) {
  const Tensor& v = value(x);
  double acc = 0.0;
  for (double e : v.values()) acc += e;
  const int xid = x.id;
  return make(Tensor({1}, {acc}), wants_grad(x), [xid](Graph& g, const Node& n) {
    if (!g.nodes_[xid].requires_grad) return;
    Tensor& dx = g.grad_buf(xid);
    const double d = n.grad[0];
    for (size_t i = 0; i < dx.size(); ++i) dx[i] += d;
  });
}

Var Graph::mean(Var x) {
  const Tensor& v = value(x);
  double acc = 0.0;
  for (double e : v.values()) acc += e;
  const double inv_n = 1.0 / static_cast<double>(v.size());
  const int xid = x.id;
  return make(Tensor({1}, {acc * inv_n}), wants_grad(x),
              [xid, inv_n](Graph& g, const Node& n) {
                if (!g.nodes_[xid].requires_grad) return;
                Tensor& dx = g.grad_buf(xid);
                const double d = n.grad[0] * inv_n;
                for (size_t i = 0; i < dx.size(); ++i) dx[i] += d;
              });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var Graph::softmax_ce(Var logits, const LabelMap& target, std::uint8_t ignore_index) {
  const Tensor& v = value(logits);
  if (v.rank() != 3) throw std::invalid_argument("softmax_ce: logits must be [C,H,W]");
  const int c_n = v.extent(0), h = v.extent(1), w = v.extent(2);
  if (target.h != h || target.w != w)
    throw std::invalid_argument("softmax_ce: target shape mismatch");

  const size_t plane = static_cast<size_t>(h) * w;
  // softmax probabilities are kept for the backward pass
  std::vector<double> probs(static_cast<size_t>(c_n) * plane);
  double loss = 0.0;
  std::size_t counted = 0;
  for (size_t pix = 0; pix < plane; ++pix) {
    const std::uint8_t t = target.v[pix];
    if (t == ignore_index) continue;
    if (t >= c_n)
      throw std::domain_error("softmax_ce: target class " + std::to_string(int(t)) +
                              " out of range [0," + std::to_string(c_n) + ")");
    double mx = v[pix];
    for (int c = 1; c < c_n; ++c) mx = std::max(mx, v[c * plane + pix]);
    double z = 0.0;
    for (int c = 0; c < c_n; ++c) {
      const double e = std::exp(v[c * plane + pix] - mx);
      probs[c * plane + pix] = e;
      z += e;
    }
    const double inv_z = 1.0 / z;
    for (int c = 0; c < c_n; ++c) probs[c * plane + pix] *= inv_z;
    loss += mx + std::log(z) - v[static_cast<size_t>(t) * plane + pix];
    ++counted;
  }
  // empty-mean convention: an all-ignored target contributes nothing
  if (counted == 0) return constant(Tensor({1}, {0.0}));
  loss /= static_cast<double>(counted);

  const int lid = logits.id;
  auto back = [lid, c_n, plane, counted, ignore_index, tgt = target.v,
               probs = std::move(probs)](Graph& g, const Node& n) {
    if (!g.nodes_[lid].requires_grad) return;
    double* dl = g.grad_buf(lid).data();
    const double d = n.grad[0] / static_cast<double>(counted);
    for (size_t pix = 0; pix < plane; ++pix) {
      const std::uint8_t t = tgt[pix];
      if (t == ignore_index) continue;
      for (int c = 0; c < c_n; ++c) {
        const double onehot = (c == t) ? 1.0 : 0.0;
        dl[c * plane + pix] += d * (probs[c * plane + pix] - onehot);
      }
    }
  };
  return make(Tensor({1}, {loss}), wants_grad(logits), std::move(back));
}

Var Graph::bce(Var pred, double target, double eps) {
  if (target != 0.0 && target != 1.0)
    throw std::invalid_argument("bce: target must be 0 or 1");
  const Tensor& v = value(pred);
  double loss = 0.0;
  for (double p : v.values()) {
    const double pc = std::clamp(p, eps, 1.0 - eps);
    loss -= target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc);
  }
  loss /= static_cast<double>(v.size());
  const int pid = pred.id;
  const double inv_n = 1.0 / static_cast<double>(v.size());
  auto back = [pid, target, eps, inv_n](Graph& g, const Node& n) {
    if (!g.nodes_[pid].requires_grad) return;
    const Tensor& v = g.nodes_[pid].val;
    double* dp = g.grad_buf(pid).data();
    const double d = n.grad[0] * inv_n;
    for (size_t i = 0; i < v.size(); ++i) {
      const double p = v[i];
      if (p < eps || p > 1.0 - eps) continue;  // clamp region has zero slope
      dp[i] += d * (p - target) / (p * (1.0 - p));
    }
  };
  return make(Tensor({1}, {loss}), wants_grad(pred), std::move(back));
}

Var Graph::detach(Var x) { return constant(value(x)); }

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void Graph::backward(Var loss) {
  if (backward_done_) throw std::logic_error("Graph: backward() called twice");
  backward_done_ = true;
  const Tensor& lv = value(loss);
  if (lv.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!nodes_[loss.id].requires_grad)
    throw std::invalid_argument("backward: loss does not require grad");

  grad_buf(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.back) continue;
    n.back(*this, n);
  }
  for (auto& [p, id] : bindings_) {
    const Tensor& g = nodes_[id].grad;
    if (g.empty()) continue;
    require_finite(g, "parameter gradient");
    for (size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
  }
}

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() != 3)
    throw std::invalid_argument("argmax_labels: logits must be [C,H,W]");
  const int c_n = logits.extent(0), h = logits.extent(1), w = logits.extent(2);
  const size_t plane = static_cast<size_t>(h) * w;
  LabelMap out(h, w);
  for (size_t pix = 0; pix < plane; ++pix) {
    int best = 0;
    double bv = logits[pix];
    for (int c = 1; c < c_n; ++c) {
      const double x = logits[c * plane + pix];
      if (x > bv) {
        bv = x;
        best = c;
      }
    }
    out.v[pix] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace seglab
