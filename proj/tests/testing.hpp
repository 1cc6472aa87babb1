#pragma once

#include <functional>

#include "gswm/core/graph.hpp"

namespace gswm::testing {

// Central-difference gradient check for a scalar-valued functional of one
// leaf tensor. Returns the maximum relative error over elements whose
// analytic or numeric gradient is non-negligible.
template <class S>
double gradcheck(const std::function<Var<S>(const Var<S>&)>& f, Tensor<S> x0, double h = 1e-5) {
  Var<S> x = Var<S>::leaf(x0, true);
  Var<S> y = f(x);
  backward(y);
  Tensor<S> analytic = x.grad();

  double max_rel = 0.0;
  for (int64_t i = 0; i < x0.numel(); ++i) {
    Tensor<S> xp = x0, xm = x0;
    double step = h * std::max(1.0, std::abs((double)x0[i]));
    xp[i] += (S)step;
    xm[i] -= (S)step;
    double fp = (double)f(Var<S>::leaf(xp, false)).val().item();
    double fm = (double)f(Var<S>::leaf(xm, false)).val().item();
    double numeric = (fp - fm) / (2 * step);
    double denom = std::max(std::abs(numeric), std::abs((double)analytic[i]));
    if (denom < 1e-7) continue;
    max_rel = std::max(max_rel, std::abs(numeric - (double)analytic[i]) / denom);
  }
  return max_rel;
}

}  // namespace gswm::testing
