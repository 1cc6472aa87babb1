#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gswm/core/graph.hpp"
#include "gswm/core/rng.hpp"

namespace gswm {

// Flat registry of named trainable parameters. Modules add their leaves here
// at construction; the optimizer and checkpoint code iterate it.
template <class S>
struct ParamStore {
  struct Entry {
    std::string name;
    Var<S> var;
  };
  std::vector<Entry> entries;

  Var<S> add(const std::string& name, Tensor<S> init) {
    for (auto& e : entries)
      if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    Var<S> v = Var<S>::leaf(std::move(init), true);
    entries.push_back({name, v});
    return v;
  }

  void zero_grad() {
    for (auto& e : entries) e.var.zero_grad();
  }

  int64_t numel() const {
    int64_t n = 0;
    for (auto& e : entries) n += e.var.numel();
    return n;
  }

  Var<S> find(const std::string& name) const {
    for (auto& e : entries)
      if (e.name == name) return e.var;
    throw std::invalid_argument("no such parameter: " + name);
  }

  void save(std::ostream& os) const {
    const char magic[8] = {'G', 'S', 'W', 'M', 'P', 'A', 'R', '1'};
    os.write(magic, 8);
    uint32_t scalar_size = sizeof(S), count = (uint32_t)entries.size();
    os.write((const char*)&scalar_size, 4);
    os.write((const char*)&count, 4);
    for (auto& e : entries) {
      uint32_t nl = (uint32_t)e.name.size();
      os.write((const char*)&nl, 4);
      os.write(e.name.data(), nl);
      const Tensor<S>& t = e.var.val();
      uint32_t nd = (uint32_t)t.shape.size();
      os.write((const char*)&nd, 4);
      for (int64_t d : t.shape) {
        int64_t dd = d;
        os.write((const char*)&dd, 8);
      }
      os.write((const char*)t.ptr(), (std::streamsize)(t.numel() * sizeof(S)));
    }
  }

  void load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, "GSWMPAR1", 8) != 0) throw std::runtime_error("bad parameter blob header");
    uint32_t scalar_size = 0, count = 0;
    is.read((char*)&scalar_size, 4);
    is.read((char*)&count, 4);
    if (scalar_size != sizeof(S)) throw std::runtime_error("parameter blob scalar width mismatch");
    if (count != entries.size()) throw std::runtime_error("parameter blob entry count mismatch");
    for (auto& e : entries) {
      uint32_t nl = 0;
      is.read((char*)&nl, 4);
      std::string name(nl, '\0');
      is.read(name.data(), nl);
      if (name != e.name) throw std::runtime_error("parameter name mismatch: " + name + " vs " + e.name);
      uint32_t nd = 0;
      is.read((char*)&nd, 4);
      Shape sh(nd);
      for (auto& d : sh) is.read((char*)&d, 8);
      Tensor<S>& t = const_cast<Tensor<S>&>(e.var.val());
      if (sh != t.shape) throw std::runtime_error("parameter shape mismatch for " + name);
      is.read((char*)t.ptr(), (std::streamsize)(t.numel() * sizeof(S)));
    }
    if (!is) throw std::runtime_error("truncated parameter blob");
  }
};

template <class S>
struct Adam {
  S lr = S(1e-4);
  S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
  int64_t t = 0;
  std::vector<Tensor<S>> m, v;

  explicit Adam(S lr_ = S(1e-4)) : lr(lr_) {}

  void ensure_state(const ParamStore<S>& ps) {
    if (m.size() == ps.entries.size()) return;
    m.clear();
    v.clear();
    for (auto& e : ps.entries) {
      m.push_back(Tensor<S>::zeros(e.var.shape()));
      v.push_back(Tensor<S>::zeros(e.var.shape()));
    }
  }

  // Global-norm gradient clipping; returns the pre-clip norm.
  static S clip_global_norm(ParamStore<S>& ps, S max_norm) {
    double sq = 0;
    for (auto& e : ps.entries) {
      const Tensor<S>& g = e.var.grad();
      for (int64_t i = 0; i < g.numel(); ++i) sq += (double)g[i] * (double)g[i];
    }
    S norm = (S)std::sqrt(sq);
    if (norm > max_norm && norm > S(0)) {
      S scale = max_norm / norm;
      for (auto& e : ps.entries) {
        Tensor<S>& g = e.var.grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
      }
    }
    return norm;
  }

  void step(ParamStore<S>& ps) {
    ensure_state(ps);
    ++t;
    S bc1 = S(1) - std::pow(beta1, (S)t);
    S bc2 = S(1) - std::pow(beta2, (S)t);
    for (size_t p = 0; p < ps.entries.size(); ++p) {
      Tensor<S>& w = const_cast<Tensor<S>&>(ps.entries[p].var.val());
      const Tensor<S>& g = ps.entries[p].var.grad();
      Tensor<S>& mp = m[p];
      Tensor<S>& vp = v[p];
      for (int64_t i = 0; i < w.numel(); ++i) {
        mp[i] = beta1 * mp[i] + (S(1) - beta1) * g[i];
        vp[i] = beta2 * vp[i] + (S(1) - beta2) * g[i] * g[i];
        w[i] -= lr * (mp[i] / bc1) / (std::sqrt(vp[i] / bc2) + eps);
      }
    }
  }

  void save(std::ostream& os) const {
    int64_t tt = t;
    uint32_t n = (uint32_t)m.size();
    os.write((const char*)&tt, 8);
    os.write((const char*)&n, 4);
    for (uint32_t i = 0; i < n; ++i) {
      int64_t sz = m[i].numel();
      os.write((const char*)&sz, 8);
      os.write((const char*)m[i].ptr(), (std::streamsize)(sz * sizeof(S)));
      os.write((const char*)v[i].ptr(), (std::streamsize)(sz * sizeof(S)));
    }
  }

  void load(std::istream& is, const ParamStore<S>& ps) {
    ensure_state(ps);
    int64_t tt = 0;
    uint32_t n = 0;
    is.read((char*)&tt, 8);
    is.read((char*)&n, 4);
    if (n != m.size()) throw std::runtime_error("optimizer state count mismatch");
    t = tt;
    for (uint32_t i = 0; i < n; ++i) {
      int64_t sz = 0;
      is.read((char*)&sz, 8);
      if (sz != m[i].numel()) throw std::runtime_error("optimizer state size mismatch");
      is.read((char*)m[i].ptr(), (std::streamsize)(sz * sizeof(S)));
      is.read((char*)v[i].ptr(), (std::streamsize)(sz * sizeof(S)));
    }
  }
};

}  // namespace gswm
