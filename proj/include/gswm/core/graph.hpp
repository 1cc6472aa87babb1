#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gswm/core/tensor.hpp"

namespace gswm {

// Reverse-mode autodiff over dense tensors. Graphs are built dynamically;
// every op returns a fresh node holding the value plus a backward closure.

inline bool& grad_mode() {
  thread_local bool mode = true;
  return mode;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void()> backward;

  Tensor<S>& grad_ref() {
    if (grad.data.size() != value.data.size()) grad = Tensor<S>::zeros(value.shape);
    return grad;
  }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

  static Var constant(Tensor<S> t) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(t);
    return Var(std::move(n));
  }
  static Var scalar(S v) { return constant(Tensor<S>::scalar(v)); }
  static Var leaf(Tensor<S> t, bool requires_grad = true) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor<S>& val() const { return n_->value; }
  Tensor<S>& grad() const { return n_->grad_ref(); }
  const Shape& shape() const { return n_->value.shape; }
  int64_t numel() const { return n_->value.numel(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const std::shared_ptr<Node<S>>& node() const { return n_; }

  void zero_grad() const {
    auto& g = n_->grad_ref();
    std::fill(g.data.begin(), g.data.end(), S(0));
  }

 private:
  std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <class S>
std::shared_ptr<Node<S>> fresh(Tensor<S> value, std::vector<Var<S>> parents) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (grad_mode()) {
    for (auto& p : parents)
      if (p.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    if (n->requires_grad) {
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
    }
  }
  return n;
}

// Walk every output position of `out` carrying flat offsets into two
// broadcast inputs.
template <class Fn>
void broadcast_walk(const Shape& out, const Shape& sa, const Shape& sb, Fn&& fn) {
  const int64_t n = shape_numel(out);
  if (out.empty()) {
    fn((int64_t)0, (int64_t)0, (int64_t)0);
    return;
  }
  Shape sta = broadcast_strides(sa, out), stb = broadcast_strides(sb, out);
  const size_t nd = out.size();
  std::vector<int64_t> idx(nd, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (int64_t d = (int64_t)nd - 1; d >= 0; --d) {
      ++idx[(size_t)d];
      ia += sta[(size_t)d];
      ib += stb[(size_t)d];
      if (idx[(size_t)d] < out[(size_t)d]) break;
      ia -= sta[(size_t)d] * out[(size_t)d];
      ib -= stb[(size_t)d] * out[(size_t)d];
      idx[(size_t)d] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <class S, class F, class DF>
Var<S> unary_op(const Var<S>& a, F f, DF df) {
  const Tensor<S>& x = a.val();
  Tensor<S> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  auto n = detail::fresh<S>(std::move(y), {a});
  if (n->requires_grad) {
    auto pa = a.node();
    Node<S>* self = n.get();
    n->backward = [self, pa, df]() {
      const Tensor<S>& x = pa->value;
      const Tensor<S>& yv = self->value;
      const Tensor<S>& g = self->grad;
      Tensor<S>& ga = pa->grad_ref();
      for (int64_t i = 0; i < x.numel(); ++i) ga[i] += g[i] * df(x[i], yv[i]);
    };
  }
  return Var<S>(std::move(n));
}

template <class S, class F, class DFA, class DFB>
Var<S> binary_op(const Var<S>& a, const Var<S>& b, F f, DFA dfa, DFB dfb) {
  const Tensor<S>& x = a.val();
  const Tensor<S>& yb = b.val();
  Shape osh = broadcast_shape(x.shape, yb.shape);
  Tensor<S> out(osh);
  if (x.shape == yb.shape) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(x[i], yb[i]);
  } else {
    detail::broadcast_walk(osh, x.shape, yb.shape,
                           [&](int64_t i, int64_t ia, int64_t ib) { out[i] = f(x[ia], yb[ib]); });
  }
  auto n = detail::fresh<S>(std::move(out), {a, b});
  if (n->requires_grad) {
    auto pa = a.node(), pb = b.node();
    bool na = a.requires_grad(), nb = b.requires_grad();
    Node<S>* self = n.get();
    n->backward = [self, pa, pb, na, nb, dfa, dfb]() {
      const Tensor<S>& x = pa->value;
      const Tensor<S>& y = pb->value;
      const Tensor<S>& g = self->grad;
      Tensor<S>* ga = na ? &pa->grad_ref() : nullptr;
      Tensor<S>* gb = nb ? &pb->grad_ref() : nullptr;
      if (x.shape == y.shape) {
        for (int64_t i = 0; i < g.numel(); ++i) {
          if (ga) (*ga)[i] += g[i] * dfa(x[i], y[i]);
          if (gb) (*gb)[i] += g[i] * dfb(x[i], y[i]);
        }
      } else {
        detail::broadcast_walk(self->value.shape, x.shape, y.shape,
                               [&](int64_t i, int64_t ia, int64_t ib) {
                                 if (ga) (*ga)[ia] += g[i] * dfa(x[ia], y[ib]);
                                 if (gb) (*gb)[ib] += g[i] * dfb(x[ia], y[ib]);
                               });
      }
    };
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); }, [](S, S) { return S(1); });
}
template <class S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); }, [](S, S) { return S(-1); });
}
template <class S>
Var<S> operator*(const Var<S>& a, const Var<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; }, [](S x, S) { return x; });
}
template <class S>
Var<S> operator/(const Var<S>& a, const Var<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

template <class S>
Var<S> operator+(const Var<S>& a, S c) {
  return unary_op(
      a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}
template <class S>
Var<S> operator+(S c, const Var<S>& a) {
  return a + c;
}
template <class S>
Var<S> operator-(const Var<S>& a, S c) {
  return a + (-c);
}
template <class S>
Var<S> operator-(S c, const Var<S>& a) {
  return unary_op(
      a, [c](S x) { return c - x; }, [](S, S) { return S(-1); });
}
template <class S>
Var<S> operator*(const Var<S>& a, S c) {
  return unary_op(
      a, [c](S x) { return x * c; }, [c](S, S) { return c; });
}
template <class S>
Var<S> operator*(S c, const Var<S>& a) {
  return a * c;
}
template <class S>
Var<S> operator/(const Var<S>& a, S c) {
  return a * (S(1) / c);
}
template <class S>
Var<S> operator-(const Var<S>& a) {
  return a * S(-1);
}

template <class S>
Var<S> vexp(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}
template <class S>
Var<S> vlog(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}
template <class S>
Var<S> vsqrt(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::sqrt(x); }, [](S, S y) { return S(0.5) / y; });
}
template <class S>
Var<S> square(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}
template <class S>
Var<S> vtanh(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}
template <class S>
Var<S> vsigmoid(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return S(1) / (S(1) + std::exp(-x)); }, [](S, S y) { return y * (S(1) - y); });
}
template <class S>
Var<S> softplus(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(20) ? x : std::log1p(std::exp(x)); },
      [](S x, S) { return S(1) / (S(1) + std::exp(-x)); });
}
template <class S>
Var<S> celu(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(0) ? x : std::expm1(x); },
      [](S x, S) { return x > S(0) ? S(1) : std::exp(x); });
}
template <class S>
Var<S> relu(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}
template <class S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  return unary_op(
      a, [lo, hi](S x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](S x, S) { return (x >= lo && x <= hi) ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// reductions

template <class S>
Var<S> sum(const Var<S>& a) {
  const Tensor<S>& x = a.val();
  S acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  auto n = detail::fresh<S>(Tensor<S>::scalar(acc), {a});
  if (n->requires_grad) {
    auto pa = a.node();
    Node<S>* self = n.get();
    n->backward = [self, pa]() {
      Tensor<S>& ga = pa->grad_ref();
      S g = self->grad[0];
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    };
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> mean(const Var<S>& a) {
  return sum(a) * (S(1) / (S)a.numel());
}

// sum over one dimension, optionally keeping it with size 1
template <class S>
Var<S> sum(const Var<S>& a, int64_t dim, bool keepdim) {
  const Tensor<S>& x = a.val();
  int64_t nd = x.dim();
  if (dim < 0) dim += nd;
  Shape osh = x.shape;
  osh[(size_t)dim] = 1;
  int64_t outer = 1, inner = 1, d = x.shape[(size_t)dim];
  for (int64_t i = 0; i < dim; ++i) outer *= x.shape[(size_t)i];
  for (int64_t i = dim + 1; i < nd; ++i) inner *= x.shape[(size_t)i];
  Tensor<S> y(osh);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < d; ++j) {
      const S* sp = x.ptr() + (o * d + j) * inner;
      S* dp = y.ptr() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dp[i] += sp[i];
    }
  if (!keepdim) osh.erase(osh.begin() + dim);
  y.shape = osh;
  auto n = detail::fresh<S>(std::move(y), {a});
  if (n->requires_grad) {
    auto pa = a.node();
    Node<S>* self = n.get();
    n->backward = [self, pa, outer, d, inner]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& ga = pa->grad_ref();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < d; ++j) {
          S* dp = ga.ptr() + (o * d + j) * inner;
          const S* sp = g.ptr() + o * inner;
          for (int64_t i = 0; i < inner; ++i) dp[i] += sp[i];
        }
    };
  }
  return Var<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// shape ops

template <class S>
Var<S> reshape(const Var<S>& a, Shape sh) {
  // allow one -1 wildcard
  int64_t known = 1, wild = -1;
  for (size_t i = 0; i < sh.size(); ++i) {
    if (sh[i] == -1) wild = (int64_t)i;
    else known *= sh[i];
  }
  if (wild >= 0) sh[(size_t)wild] = a.numel() / known;
  Tensor<S> y = a.val().reshaped(sh);
  auto n = detail::fresh<S>(std::move(y), {a});
  if (n->requires_grad) {
    auto pa = a.node();
    Node<S>* self = n.get();
    n->backward = [self, pa]() {
      Tensor<S>& ga = pa->grad_ref();
      const Tensor<S>& g = self->grad;
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    };
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> unsqueeze(const Var<S>& a, int64_t dim) {
  Shape sh = a.shape();
  if (dim < 0) dim += (int64_t)sh.size() + 1;
  sh.insert(sh.begin() + dim, 1);
  return reshape(a, sh);
}

template <class S>
Var<S> flatten2(const Var<S>& a) {
  // [d0, d1, ..., dn] -> [d0, rest]
  return reshape(a, Shape{a.shape()[0], -1});
}

template <class S>
Var<S> slice(const Var<S>& a, int64_t dim, int64_t start, int64_t len) {
  const Tensor<S>& x = a.val();
  int64_t nd = x.dim();
  if (dim < 0) dim += nd;
  if (start < 0 || start + len > x.shape[(size_t)dim]) throw std::invalid_argument("slice: out of range");
  Shape osh = x.shape;
  osh[(size_t)dim] = len;
  int64_t outer = 1, inner = 1, d = x.shape[(size_t)dim];
  for (int64_t i = 0; i < dim; ++i) outer *= x.shape[(size_t)i];
  for (int64_t i = dim + 1; i < nd; ++i) inner *= x.shape[(size_t)i];
  Tensor<S> y(osh);
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(x.ptr() + (o * d + start) * inner, len * inner, y.ptr() + o * len * inner);
  auto n = detail::fresh<S>(std::move(y), {a});
  if (n->requires_grad) {
    auto pa = a.node();
    Node<S>* self = n.get();
    n->backward = [self, pa, outer, inner, d, start, len]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& ga = pa->grad_ref();
      for (int64_t o = 0; o < outer; ++o) {
        const S* sp = g.ptr() + o * len * inner;
        S* dp = ga.ptr() + (o * d + start) * inner;
        for (int64_t i = 0; i < len * inner; ++i) dp[i] += sp[i];
      }
    };
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> concat(const std::vector<Var<S>>& parts, int64_t dim) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input");
  int64_t nd = parts[0].val().dim();
  if (dim < 0) dim += nd;
  Shape osh = parts[0].shape();
  int64_t total = 0;
  for (auto& p : parts) total += p.shape()[(size_t)dim];
  osh[(size_t)dim] = total;
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < dim; ++i) outer *= osh[(size_t)i];
  for (int64_t i = dim + 1; i < nd; ++i) inner *= osh[(size_t)i];
  Tensor<S> y(osh);
  int64_t off = 0;
  for (auto& p : parts) {
    const Tensor<S>& x = p.val();
    int64_t d = x.shape[(size_t)dim];
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(x.ptr() + o * d * inner, d * inner, y.ptr() + (o * total + off) * inner);
    off += d;
  }
  auto n = detail::fresh<S>(std::move(y), parts);
  if (n->requires_grad) {
    std::vector<std::shared_ptr<Node<S>>> ps;
    std::vector<int64_t> dims;
    std::vector<bool> need;
    for (auto& p : parts) {
      ps.push_back(p.node());
      dims.push_back(p.shape()[(size_t)dim]);
      need.push_back(p.requires_grad());
    }
    Node<S>* self = n.get();
    n->backward = [self, ps, dims, need, outer, inner, total]() {
      const Tensor<S>& g = self->grad;
      int64_t off = 0;
      for (size_t k = 0; k < ps.size(); ++k) {
        int64_t d = dims[k];
        if (need[k]) {
          Tensor<S>& ga = ps[k]->grad_ref();
          for (int64_t o = 0; o < outer; ++o) {
            const S* sp = g.ptr() + (o * total + off) * inner;
            S* dp = ga.ptr() + o * d * inner;
            for (int64_t i = 0; i < d * inner; ++i) dp[i] += sp[i];
          }
        }
        off += d;
      }
    };
  }
  return Var<S>(std::move(n));
}

// repeat a size-1 dimension `times` times (materialized copy)
template <class S>
Var<S> expand(const Var<S>& a, int64_t dim, int64_t times) {
  const Tensor<S>& x = a.val();
  int64_t nd = x.dim();
  if (dim < 0) dim += nd;
  if (x.shape[(size_t)dim] != 1) throw std::invalid_argument("expand: dim size must be 1");
  Shape osh = x.shape;
  osh[(size_t)dim] = times;
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < dim; ++i) outer *= x.shape[(size_t)i];
  for (int64_t i = dim + 1; i < nd; ++i) inner *= x.shape[(size_t)i];
  Tensor<S> y(osh);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t t = 0; t < times; ++t)
      std::copy_n(x.ptr() + o * inner, inner, y.ptr() + (o * times + t) * inner);
  auto n = detail::fresh<S>(std::move(y), {a});
  if (n->requires_grad) {
    auto pa = a.node();
    Node<S>* self = n.get();
    n->backward = [self, pa, outer, inner, times]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& ga = pa->grad_ref();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t t = 0; t < times; ++t) {
          const S* sp = g.ptr() + (o * times + t) * inner;
          S* dp = ga.ptr() + o * inner;
          for (int64_t i = 0; i < inner; ++i) dp[i] += sp[i];
        }
    };
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> detach(const Var<S>& a) {
  return Var<S>::constant(a.val());
}

// ---------------------------------------------------------------------------
// backward pass

template <class S>
void backward(const Var<S>& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  Node<S>* root = loss.node().get();
  if (!root->requires_grad) return;

  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_ref();
  root->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward();
}

}  // namespace gswm
