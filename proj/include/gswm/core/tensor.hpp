#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gswm {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense row-major n-d array. Plain value type, no autograd.
template <class S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape sh) : shape(std::move(sh)), data(shape_numel(shape), S(0)) {}
  Tensor(Shape sh, S fill) : shape(std::move(sh)), data(shape_numel(shape), fill) {}
  Tensor(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
    if ((int64_t)data.size() != shape_numel(shape))
      throw std::invalid_argument("tensor: data size does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
  static Tensor full(Shape sh, S v) { return Tensor(std::move(sh), v); }
  static Tensor scalar(S v) { return Tensor(Shape{}, std::vector<S>{v}); }

  int64_t numel() const { return (int64_t)data.size(); }
  int64_t dim() const { return (int64_t)shape.size(); }
  int64_t size(int64_t d) const { return shape[(size_t)(d < 0 ? d + dim() : d)]; }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[(size_t)i]; }
  const S& operator[](int64_t i) const { return data[(size_t)i]; }

  S item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
    return data[0];
  }

  // index helpers for up to 5 dims
  S& at(int64_t a, int64_t b) { return data[(size_t)(a * shape[1] + b)]; }
  S& at(int64_t a, int64_t b, int64_t c) { return data[(size_t)((a * shape[1] + b) * shape[2] + c)]; }
  S& at(int64_t a, int64_t b, int64_t c, int64_t d) {
    return data[(size_t)(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  const S& at(int64_t a, int64_t b) const { return data[(size_t)(a * shape[1] + b)]; }
  const S& at(int64_t a, int64_t b, int64_t c) const { return data[(size_t)((a * shape[1] + b) * shape[2] + c)]; }
  const S& at(int64_t a, int64_t b, int64_t c, int64_t d) const {
    return data[(size_t)(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }

  Tensor reshaped(Shape sh) const {
    if (shape_numel(sh) != numel())
      throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape) + " -> " + shape_str(sh));
    Tensor out = *this;
    out.shape = std::move(sh);
    return out;
  }

  template <class T2>
  Tensor<T2> cast() const {
    Tensor<T2> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = (T2)data[i];
    return out;
  }
};

inline Shape row_strides(const Shape& s) {
  Shape st(s.size(), 1);
  for (int64_t i = (int64_t)s.size() - 2; i >= 0; --i) st[(size_t)i] = st[(size_t)i + 1] * s[(size_t)i + 1];
  return st;
}

// Right-aligned broadcast of two shapes; throws when incompatible.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  size_t na = a.size(), nb = b.size(), n = std::max(na, nb);
  out.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int64_t da = i < n - na ? 1 : a[i - (n - na)];
    int64_t db = i < n - nb ? 1 : b[i - (n - nb)];
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` as seen through broadcast shape `out` (0 where broadcast).
inline Shape broadcast_strides(const Shape& s, const Shape& out) {
  Shape st = row_strides(s);
  Shape r(out.size(), 0);
  size_t off = out.size() - s.size();
  for (size_t i = 0; i < s.size(); ++i) r[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

}  // namespace gswm
