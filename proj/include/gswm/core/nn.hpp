#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gswm/core/module.hpp"
#include "gswm/core/ops.hpp"

namespace gswm {

template <class S>
Tensor<S> uniform_init(Shape sh, S bound, Rng& rng) {
  Tensor<S> t(std::move(sh));
  for (auto& v : t.data) v = (S)rng.uniform(-(double)bound, (double)bound);
  return t;
}

template <class S>
struct Linear {
  Var<S> W, b;

  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out, Rng& rng,
         bool bias = true) {
    S bound = S(1) / std::sqrt((S)in);
    W = ps.add(name + ".weight", uniform_init<S>({out, in}, bound, rng));
    if (bias) b = ps.add(name + ".bias", uniform_init<S>({out}, bound, rng));
  }

  Var<S> operator()(const Var<S>& x) const { return linear(x, W, b); }
};

template <class S>
struct Conv2d {
  Var<S> W, b;
  int64_t stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<S>& ps, const std::string& name, int64_t in_ch, int64_t out_ch, int64_t k,
         int64_t stride_, int64_t pad_, Rng& rng, bool bias = true)
      : stride(stride_), pad(pad_) {
    S bound = S(1) / std::sqrt((S)(in_ch * k * k));
    W = ps.add(name + ".weight", uniform_init<S>({out_ch, in_ch, k, k}, bound, rng));
    if (bias) b = ps.add(name + ".bias", uniform_init<S>({out_ch}, bound, rng));
  }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, W, b, stride, pad); }
};

template <class S>
struct GroupNorm {
  Var<S> gamma, beta;
  int64_t groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamStore<S>& ps, const std::string& name, int64_t channels, int64_t groups_)
      : groups(groups_) {
    gamma = ps.add(name + ".gamma", Tensor<S>::full({channels}, S(1)));
    beta = ps.add(name + ".beta", Tensor<S>::zeros({channels}));
  }

  Var<S> operator()(const Var<S>& x) const { return group_norm(x, groups, gamma, beta); }
};

template <class S>
struct LstmCell {
  Linear<S> ih, hh;
  int64_t hidden = 0;

  LstmCell() = default;
  LstmCell(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t hidden_, Rng& rng)
      : hidden(hidden_) {
    ih = Linear<S>(ps, name + ".ih", in, 4 * hidden_, rng);
    hh = Linear<S>(ps, name + ".hh", hidden_, 4 * hidden_, rng, /*bias=*/false);
  }

  // x: [N, in], h/c: [N, hidden] -> (h', c'); gate order (i, f, g, o)
  std::pair<Var<S>, Var<S>> operator()(const Var<S>& x, const Var<S>& h, const Var<S>& c) const {
    Var<S> gates = ih(x) + hh(h);
    Var<S> i = vsigmoid(slice(gates, 1, 0, hidden));
    Var<S> f = vsigmoid(slice(gates, 1, hidden, hidden));
    Var<S> g = vtanh(slice(gates, 1, 2 * hidden, hidden));
    Var<S> o = vsigmoid(slice(gates, 1, 3 * hidden, hidden));
    Var<S> c2 = f * c + i * g;
    Var<S> h2 = o * vtanh(c2);
    return {h2, c2};
  }
};

// Fully-connected stack with CELU hidden activations and a linear output.
template <class S>
struct Mlp {
  std::vector<Linear<S>> layers;

  Mlp() = default;
  Mlp(ParamStore<S>& ps, const std::string& name, int64_t in, std::vector<int64_t> hidden,
      int64_t out, Rng& rng) {
    int64_t d = in;
    for (size_t i = 0; i < hidden.size(); ++i) {
      layers.emplace_back(ps, name + ".fc" + std::to_string(i), d, hidden[i], rng);
      d = hidden[i];
    }
    layers.emplace_back(ps, name + ".out", d, out, rng);
  }

  Var<S> operator()(Var<S> x) const {
    for (size_t i = 0; i + 1 < layers.size(); ++i) x = celu(layers[i](x));
    return layers.back()(x);
  }
};

}  // namespace gswm
