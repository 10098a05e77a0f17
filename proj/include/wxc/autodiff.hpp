#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "wxc/tensor.hpp"

namespace wxc::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the dynamically built computation graph. Gradients are
/// accumulated into `grad` by the children's backprop closures.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  Tensor& g() {
    if (grad.numel() == 0) grad = Tensor(value.shape());
    return grad;
  }
  void zero_grad() {
    if (grad.numel() > 0) grad.fill(0.0);
  }
};

inline uint64_t next_node_id() {
  static std::atomic<uint64_t> counter{0};
  return ++counter;
}

inline Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->id = next_node_id();
  return n;
}

inline Var param(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->id = next_node_id();
  return n;
}

inline Var make_op(Tensor v, std::vector<Var> parents, std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->backprop = std::move(bp);
  n->id = next_node_id();
  return n;
}

/// Reverse pass from a scalar root. Touches only the subgraph that
/// requires gradients; results accumulate (call zero_grad on params first).
inline void backward(const Var& root) {
  require(root->value.numel() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
  root->g()[0] += 1.0;
  for (Node* n : order) {
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[static_cast<size_t>(k)];
      if (!p->requires_grad) continue;
      Tensor& pg = p->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& pg = self.parents[1]->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] -= self.grad[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += s * self.grad[i];
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "hadamard: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i] * bv[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& pg = self.parents[1]->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i] * av[i];
    }
  });
}

/// Elementwise multiply by a constant tensor (drop-path masks, fixed scalings).
inline Var mul_const(const Var& a, Tensor m) {
  require(a->value.same_shape(m), "mul_const: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= m[i];
  auto mp = std::make_shared<Tensor>(std::move(m));
  return make_op(std::move(out), {a}, [mp](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i] * (*mp)[i];
  });
}

inline Var add_const(const Var& a, Tensor c) {
  require(a->value.same_shape(c), "add_const: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c[i];
  return make_op(std::move(out), {a}, [](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
  });
}

inline Var reshape(const Var& a, Shape s) {
  Tensor out = a->value.reshaped(std::move(s));
  return make_op(std::move(out), {a}, [](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
  });
}

/// Per-batch scaling of a [B, ...] tensor (stochastic-depth keep masks).
inline Var scale_batch(const Var& a, const std::vector<double>& factors) {
  const int64_t b = a->value.dim(0);
  require(static_cast<int64_t>(factors.size()) == b, "scale_batch: factor count mismatch");
  const int64_t stride = a->value.numel() / std::max<int64_t>(b, 1);
  Tensor out = a->value;
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < stride; ++j) out[i * stride + j] *= factors[static_cast<size_t>(i)];
  }
  auto f = factors;
  return make_op(std::move(out), {a}, [f, stride, b](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t j = 0; j < stride; ++j) pg[i * stride + j] += self.grad[i * stride + j] * f[static_cast<size_t>(i)];
    }
  });
}

/// General axis permutation.
inline Var permute(const Var& a, const std::vector<int>& axes) {
  const Shape& in = a->value.shape();
  const size_t nd = in.size();
  require(axes.size() == nd, "permute: axes rank mismatch");
  Shape out_shape(nd);
  for (size_t i = 0; i < nd; ++i) out_shape[i] = in[static_cast<size_t>(axes[i])];
  // strides of the input
  std::vector<int64_t> in_strides(nd, 1);
  for (size_t i = nd - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in[i];
  std::vector<int64_t> step(nd);
  for (size_t i = 0; i < nd; ++i) step[i] = in_strides[static_cast<size_t>(axes[i])];
  const int64_t n = a->value.numel();
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
  std::vector<int64_t> idx(nd, 0);
  int64_t src = 0;
  for (int64_t o = 0; o < n; ++o) {
    (*map)[static_cast<size_t>(o)] = src;
    for (size_t d = nd; d-- > 0;) {
      idx[d]++;
      src += step[d];
      if (idx[d] < out_shape[d]) break;
      src -= step[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  Tensor out(out_shape);
  for (int64_t o = 0; o < n; ++o) out[o] = a->value[(*map)[static_cast<size_t>(o)]];
  return make_op(std::move(out), {a}, [map](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t o = 0; o < self.grad.numel(); ++o) pg[(*map)[static_cast<size_t>(o)]] += self.grad[o];
  });
}

/// Relocate positions within the flattened [B, S, ...] token axis:
/// out[b, q] = in[b, perm[q]]. Used for Swin rolls (perm is a bijection).
inline Var permute_slots(const Var& a, std::shared_ptr<const std::vector<int64_t>> perm) {
  const int64_t b = a->value.dim(0);
  const int64_t s = static_cast<int64_t>(perm->size());
  const int64_t total = a->value.numel();
  require(total % b == 0, "permute_slots: ragged batch");
  const int64_t per_b = total / b;
  require(per_b % s == 0, "permute_slots: slot count does not divide sample size");
  const int64_t d = per_b / s;
  Tensor out(a->value.shape());
  for (int64_t bi = 0; bi < b; ++bi) {
    const int64_t base = bi * per_b;
    for (int64_t q = 0; q < s; ++q) {
      const int64_t src = base + (*perm)[static_cast<size_t>(q)] * d;
      const int64_t dst = base + q * d;
      for (int64_t k = 0; k < d; ++k) out[dst + k] = a->value[src + k];
    }
  }
  return make_op(std::move(out), {a}, [perm, b, s, d, per_b](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t bi = 0; bi < b; ++bi) {
      const int64_t base = bi * per_b;
      for (int64_t q = 0; q < s; ++q) {
        const int64_t src = base + (*perm)[static_cast<size_t>(q)] * d;
        const int64_t dst = base + q * d;
        for (int64_t k = 0; k < d; ++k) pg[src + k] += self.grad[dst + k];
      }
    }
  });
}

inline Var concat_lastdim(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_lastdim: empty input");
  Shape s = parts[0]->value.shape();
  int64_t lead = parts[0]->value.numel() / parts[0]->value.dim(-1);
  int64_t total_last = 0;
  for (const auto& p : parts) {
    require(p->value.numel() / p->value.dim(-1) == lead, "concat_lastdim: leading dims mismatch");
    total_last += p->value.dim(-1);
  }
  s.back() = total_last;
  Tensor out(s);
  std::vector<int64_t> widths;
  for (const auto& p : parts) widths.push_back(p->value.dim(-1));
  int64_t off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& v = parts[pi]->value;
    const int64_t w = widths[pi];
    for (int64_t r = 0; r < lead; ++r) {
      for (int64_t c = 0; c < w; ++c) out[r * total_last + off + c] = v[r * w + c];
    }
    off += w;
  }
  return make_op(std::move(out), {parts.begin(), parts.end()}, [widths, lead, total_last](Node& self) {
    int64_t off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      const int64_t w = widths[pi];
      if (self.parents[pi]->requires_grad) {
        Tensor& pg = self.parents[pi]->g();
        for (int64_t r = 0; r < lead; ++r) {
          for (int64_t c = 0; c < w; ++c) pg[r * w + c] += self.grad[r * total_last + off + c];
        }
      }
      off += w;
    }
  });
}

inline Var slice_lastdim(const Var& a, int64_t start, int64_t len) {
  const int64_t last = a->value.dim(-1);
  require(start >= 0 && start + len <= last, "slice_lastdim: out of range");
  const int64_t lead = a->value.numel() / last;
  Shape s = a->value.shape();
  s.back() = len;
  Tensor out(s);
  for (int64_t r = 0; r < lead; ++r) {
    for (int64_t c = 0; c < len; ++c) out[r * len + c] = a->value[r * last + start + c];
  }
  return make_op(std::move(out), {a}, [start, len, last, lead](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t r = 0; r < lead; ++r) {
      for (int64_t c = 0; c < len; ++c) pg[r * last + start + c] += self.grad[r * len + c];
    }
  });
}

// ---------------------------------------------------------------------------
// dense algebra
// ---------------------------------------------------------------------------

/// x[..., in] @ w[in, out] + b[out]; leading dims are flattened internally.
inline Var linear(const Var& x, const Var& w, const Var& b) {
  const int64_t in = w->value.dim(0);
  const int64_t out_dim = w->value.dim(1);
  require(x->value.dim(-1) == in, "linear: input feature size mismatch");
  require(b->value.numel() == out_dim, "linear: bias size mismatch");
  const int64_t n = x->value.numel() / in;
  Shape out_shape = x->value.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  {
    ECMap xm(x->value.data(), n, in);
    ECMap wm(w->value.data(), in, out_dim);
    EMap om(out.data(), n, out_dim);
    om.noalias() = xm * wm;
    om.rowwise() += ECMap(b->value.data(), 1, out_dim).row(0);
  }
  return make_op(std::move(out), {x, w, b}, [n, in, out_dim](Node& self) {
    ECMap gy(self.grad.data(), n, out_dim);
    const Var& x = self.parents[0];
    const Var& w = self.parents[1];
    const Var& b = self.parents[2];
    if (x->requires_grad) {
      EMap gx(x->g().data(), n, in);
      gx.noalias() += gy * ECMap(w->value.data(), in, out_dim).transpose();
    }
    if (w->requires_grad) {
      EMap gw(w->g().data(), in, out_dim);
      gw.noalias() += ECMap(x->value.data(), n, in).transpose() * gy;
    }
    if (b->requires_grad) {
      EMap gb(b->g().data(), 1, out_dim);
      gb.row(0) += gy.colwise().sum();
    }
  });
}

/// Batched matmul on [G, m, k] x [G, k, n] with optional transposes of the
/// trailing two axes.
inline Var bmm(const Var& a, const Var& b, bool ta = false, bool tb = false) {
  require(a->value.ndim() == 3 && b->value.ndim() == 3, "bmm: expects rank-3 inputs");
  const int64_t g = a->value.dim(0);
  require(b->value.dim(0) == g, "bmm: group count mismatch");
  const int64_t am = a->value.dim(1), an = a->value.dim(2);
  const int64_t bm = b->value.dim(1), bn = b->value.dim(2);
  const int64_t m = ta ? an : am;
  const int64_t k = ta ? am : an;
  const int64_t k2 = tb ? bn : bm;
  const int64_t n = tb ? bm : bn;
  require(k == k2, "bmm: inner dimension mismatch");
  Tensor out({g, m, n});
  for (int64_t i = 0; i < g; ++i) {
    ECMap A(a->value.data() + i * am * an, am, an);
    ECMap B(b->value.data() + i * bm * bn, bm, bn);
    EMap C(out.data() + i * m * n, m, n);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  return make_op(std::move(out), {a, b}, [g, am, an, bm, bn, m, n, ta, tb](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    for (int64_t i = 0; i < g; ++i) {
      ECMap GY(self.grad.data() + i * m * n, m, n);
      ECMap A(a->value.data() + i * am * an, am, an);
      ECMap B(b->value.data() + i * bm * bn, bm, bn);
      if (a->requires_grad) {
        EMap GA(a->g().data() + i * am * an, am, an);
        if (!ta && !tb)
          GA.noalias() += GY * B.transpose();
        else if (ta && !tb)
          GA.noalias() += B * GY.transpose();
        else if (!ta && tb)
          GA.noalias() += GY * B;
        else
          GA.noalias() += B.transpose() * GY.transpose();
      }
      if (b->requires_grad) {
        EMap GB(b->g().data() + i * bm * bn, bm, bn);
        if (!ta && !tb)
          GB.noalias() += A.transpose() * GY;
        else if (ta && !tb)
          GB.noalias() += A * GY;
        else if (!ta && tb)
          GB.noalias() += GY.transpose() * A;
        else
          GB.noalias() += GY.transpose() * A.transpose();
      }
    }
  });
}

inline Var softmax_lastdim(const Var& x) {
  const int64_t d = x->value.dim(-1);
  const int64_t rows = x->value.numel() / d;
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = x->value.data() + r * d;
    double* o = out.data() + r * d;
    double mx = in[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      o[i] = std::exp(in[i] - mx);
      sum += o[i];
    }
    for (int64_t i = 0; i < d; ++i) o[i] /= sum;
  }
  return make_op(std::move(out), {x}, [rows, d](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i) dot += y[i] * gy[i];
      double* px = pg.data() + r * d;
      for (int64_t i = 0; i < d; ++i) px[i] += y[i] * (gy[i] - dot);
    }
  });
}

inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6) {
  const int64_t d = x->value.dim(-1);
  require(gamma->value.numel() == d && beta->value.numel() == d, "layer_norm: affine size mismatch");
  const int64_t rows = x->value.numel() / d;
  Tensor out(x->value.shape());
  auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  auto istd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = x->value.data() + r * d;
    double m = 0.0;
    for (int64_t i = 0; i < d; ++i) m += in[i];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (int64_t i = 0; i < d; ++i) v += (in[i] - m) * (in[i] - m);
    v /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(v + eps);
    (*mu)[static_cast<size_t>(r)] = m;
    (*istd)[static_cast<size_t>(r)] = is;
    double* o = out.data() + r * d;
    for (int64_t i = 0; i < d; ++i) o[i] = (in[i] - m) * is * gamma->value[i] + beta->value[i];
  }
  return make_op(std::move(out), {x, gamma, beta}, [rows, d, mu, istd](Node& self) {
    const Var& x = self.parents[0];
    const Var& gamma = self.parents[1];
    const Var& beta = self.parents[2];
    for (int64_t r = 0; r < rows; ++r) {
      const double m = (*mu)[static_cast<size_t>(r)];
      const double is = (*istd)[static_cast<size_t>(r)];
      const double* in = x->value.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      if (gamma->requires_grad || beta->requires_grad) {
        Tensor& gg = gamma->g();
        Tensor& gb = beta->g();
        for (int64_t i = 0; i < d; ++i) {
          gg[i] += gy[i] * (in[i] - m) * is;
          gb[i] += gy[i];
        }
      }
      if (x->requires_grad) {
        double s1 = 0.0, s2 = 0.0;
        for (int64_t i = 0; i < d; ++i) {
          const double h = gy[i] * gamma->value[i];
          s1 += h;
          s2 += h * (in[i] - m) * is;
        }
        s1 /= static_cast<double>(d);
        s2 /= static_cast<double>(d);
        double* px = x->g().data() + r * d;
        for (int64_t i = 0; i < d; ++i) {
          const double h = gy[i] * gamma->value[i];
          const double xhat = (in[i] - m) * is;
          px[i] += is * (h - s1 - xhat * s2);
        }
      }
    }
  });
}

/// Exact-erf GELU; the smooth gate keeps finite-difference checks clean.
inline Var gelu(const Var& x) {
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double v = x->value[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  return make_op(std::move(out), {x}, [](Node& self) {
    Tensor& pg = self.parents[0]->g();
    const Tensor& xv = self.parents[0]->value;
    for (int64_t i = 0; i < pg.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      pg[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

/// Broadcast-add a [D] vector to every row of x[..., D].
inline Var add_rows(const Var& x, const Var& v) {
  const int64_t d = x->value.dim(-1);
  require(v->value.numel() == d, "add_rows: vector size mismatch");
  const int64_t rows = x->value.numel() / d;
  Tensor out = x->value;
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < d; ++i) out[r * d + i] += v->value[i];
  }
  return make_op(std::move(out), {x, v}, [rows, d](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& vg = self.parents[1]->g();
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < d; ++i) vg[i] += self.grad[r * d + i];
      }
    }
  });
}

/// Stack B vectors of width D into [B, D].
inline Var stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows: empty");
  const int64_t d = rows[0]->value.numel();
  Tensor out({static_cast<int64_t>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i]->value.numel() == d, "stack_rows: width mismatch");
    std::copy(rows[i]->value.data(), rows[i]->value.data() + d, out.data() + static_cast<int64_t>(i) * d);
  }
  return make_op(std::move(out), {rows.begin(), rows.end()}, [d](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      if (!self.parents[i]->requires_grad) continue;
      Tensor& pg = self.parents[i]->g();
      const double* gy = self.grad.data() + static_cast<int64_t>(i) * d;
      for (int64_t k = 0; k < d; ++k) pg[k] += gy[k];
    }
  });
}

/// Add v[b] to every trailing row of sample b: x [B, ..., D] + v [B, D].
inline Var add_rows_per_batch(const Var& x, const Var& v) {
  const int64_t b = x->value.dim(0);
  const int64_t d = x->value.dim(-1);
  require(v->value.ndim() == 2 && v->value.dim(0) == b && v->value.dim(1) == d, "add_rows_per_batch: shape mismatch");
  const int64_t rows = x->value.numel() / (b * d);
  Tensor out = x->value;
  for (int64_t bi = 0; bi < b; ++bi) {
    const double* vr = v->value.data() + bi * d;
    double* dst = out.data() + bi * rows * d;
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t i = 0; i < d; ++i) dst[r * d + i] += vr[i];
    }
  }
  return make_op(std::move(out), {x, v}, [b, d, rows](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->g();
      for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& vg = self.parents[1]->g();
      for (int64_t bi = 0; bi < b; ++bi) {
        const double* gy = self.grad.data() + bi * rows * d;
        double* out_row = vg.data() + bi * d;
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t i = 0; i < d; ++i) out_row[i] += gy[r * d + i];
        }
      }
    }
  });
}

/// Select one row of a [R, D] table (learned time encodings).
inline Var select_row(const Var& table, int64_t r) {
  const int64_t rows = table->value.dim(0);
  const int64_t d = table->value.dim(1);
  require(r >= 0 && r < rows, "select_row: row out of range");
  Tensor out({d});
  for (int64_t i = 0; i < d; ++i) out[i] = table->value[r * d + i];
  return make_op(std::move(out), {table}, [r, d](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < d; ++i) pg[r * d + i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

inline Var reduce_sum(const Var& x) {
  Tensor out({1});
  out[0] = x->value.sum();
  return make_op(std::move(out), {x}, [](Node& self) {
    Tensor& pg = self.parents[0]->g();
    const double g = self.grad[0];
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += g;
  });
}

inline Var reduce_mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x->value.numel());
  Tensor out({1});
  out[0] = x->value.sum() * inv;
  return make_op(std::move(out), {x}, [inv](Node& self) {
    Tensor& pg = self.parents[0]->g();
    const double g = self.grad[0] * inv;
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += g;
  });
}

/// Weighted sum with a fixed coefficient tensor: sum(c * x). Used as the
/// scalarizer for probe/gradient tests.
inline Var weighted_sum(const Var& x, Tensor c) {
  require(x->value.same_shape(c), "weighted_sum: shape mismatch");
  Tensor out({1});
  double s = 0.0;
  for (int64_t i = 0; i < c.numel(); ++i) s += c[i] * x->value[i];
  out[0] = s;
  auto cp = std::make_shared<Tensor>(std::move(c));
  return make_op(std::move(out), {x}, [cp](Node& self) {
    Tensor& pg = self.parents[0]->g();
    const double g = self.grad[0];
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += g * (*cp)[i];
  });
}

/// Per-channel affine y_c = x_c * scale_c + shift_c on [..., C, H, W] with
/// fixed coefficients (normalization constants are never trained).
inline Var channel_affine(const Var& x, const std::vector<double>& scale, const std::vector<double>& shift) {
  const int64_t c = x->value.dim(-3);
  require(static_cast<int64_t>(scale.size()) == c && static_cast<int64_t>(shift.size()) == c,
          "channel_affine: coefficient count mismatch");
  const int64_t hw = x->value.dim(-1) * x->value.dim(-2);
  const int64_t lead = x->value.numel() / (c * hw);
  Tensor out = x->value;
  for (int64_t l = 0; l < lead; ++l) {
    for (int64_t ci = 0; ci < c; ++ci) {
      double* p = out.data() + (l * c + ci) * hw;
      const double a = scale[static_cast<size_t>(ci)];
      const double b = shift[static_cast<size_t>(ci)];
      for (int64_t i = 0; i < hw; ++i) p[i] = p[i] * a + b;
    }
  }
  auto sc = scale;
  return make_op(std::move(out), {x}, [sc, c, hw, lead](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t l = 0; l < lead; ++l) {
      for (int64_t ci = 0; ci < c; ++ci) {
        const int64_t base = (l * c + ci) * hw;
        const double a = sc[static_cast<size_t>(ci)];
        for (int64_t i = 0; i < hw; ++i) pg[base + i] += self.grad[base + i] * a;
      }
    }
  });
}

}  // namespace wxc::ad
