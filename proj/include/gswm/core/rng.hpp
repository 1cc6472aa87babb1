#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "gswm/core/tensor.hpp"

namespace gswm {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seedable RNG with hand-rolled distributions so that sampled streams do not
// depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return (double)(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int64_t uniform_int(int64_t n) { return (int64_t)(uniform() * (double)n) % n; }

  bool coin() { return (eng_() >> 63) != 0; }

  // Box-Muller; draws two uniforms per call, no cached spare.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    u1 = u1 <= 0.0 ? 0x1.0p-53 : u1;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // logistic noise log(u) - log(1-u)
  double logistic() {
    double u = uniform();
    u = std::min(std::max(u, 0x1.0p-53), 1.0 - 0x1.0p-53);
    return std::log(u) - std::log(1.0 - u);
  }

  // Derived stream (e.g. per-episode rng from a base seed and index).
  static Rng stream(uint64_t base_seed, uint64_t index) {
    return Rng(splitmix64(base_seed ^ splitmix64(index + 1)));
  }

  template <class S>
  Tensor<S> randn(Shape sh) {
    Tensor<S> t(std::move(sh));
    for (auto& v : t.data) v = (S)normal();
    return t;
  }

  template <class S>
  Tensor<S> rand(Shape sh) {
    Tensor<S> t(std::move(sh));
    for (auto& v : t.data) v = (S)uniform();
    return t;
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gswm
