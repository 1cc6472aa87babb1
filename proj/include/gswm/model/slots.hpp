#pragma once

#include "gswm/core/ops.hpp"

namespace gswm {

// Batched object slots. All fields are [B, K, d]; `alive` is a constant 0/1
// mask marking array positions that hold a real (selected) object. Dead slots
// keep static shapes and are masked out of interactions and losses.
template <class S>
struct SlotState {
  Var<S> pres;     // [B, K, 1] in [0, 1]
  Var<S> depth;    // [B, K, 1]
  Var<S> xy;       // [B, K, 2] in [-1, 1], (x, y)
  Var<S> hw;       // [B, K, 2] in (0, 1), (h, w)
  Var<S> what;     // [B, K, Dwhat]
  Var<S> z_state;  // [B, K, Dstate]
  Var<S> h_prior, c_prior;  // [B, K, H]
  Var<S> h_post, c_post;    // [B, K, H]
  Var<S> alive;    // [B, K, 1] constant
  Tensor<int64_t> ids;  // [B, K] stable track ids (-1 for dead)

  int64_t batch() const { return pres.shape()[0]; }
  int64_t count() const { return pres.shape()[1]; }

  static SlotState zeros(int64_t B, int64_t K, int64_t d_what, int64_t d_state, int64_t d_h) {
    SlotState s;
    s.pres = Var<S>::constant(Tensor<S>::zeros({B, K, 1}));
    s.depth = Var<S>::constant(Tensor<S>::zeros({B, K, 1}));
    s.xy = Var<S>::constant(Tensor<S>::zeros({B, K, 2}));
    s.hw = Var<S>::constant(Tensor<S>::full({B, K, 2}, (S)0.1));
    s.what = Var<S>::constant(Tensor<S>::zeros({B, K, d_what}));
    s.z_state = Var<S>::constant(Tensor<S>::zeros({B, K, d_state}));
    s.h_prior = Var<S>::constant(Tensor<S>::zeros({B, K, d_h}));
    s.c_prior = Var<S>::constant(Tensor<S>::zeros({B, K, d_h}));
    s.h_post = Var<S>::constant(Tensor<S>::zeros({B, K, d_h}));
    s.c_post = Var<S>::constant(Tensor<S>::zeros({B, K, d_h}));
    s.alive = Var<S>::constant(Tensor<S>::zeros({B, K, 1}));
    s.ids = Tensor<int64_t>(Shape{B, K}, std::vector<int64_t>((size_t)(B * K), -1));
    return s;
  }

  // Explicit attribute vector o^k = (pres, depth, xy, hw, what), [B, K, .]
  Var<S> attr_vec() const { return concat<S>({pres, depth, xy, hw, what}, 2); }

  // Concatenate two slot sets along K.
  static SlotState concat_k(const SlotState& a, const SlotState& b) {
    SlotState s;
    s.pres = concat<S>({a.pres, b.pres}, 1);
    s.depth = concat<S>({a.depth, b.depth}, 1);
    s.xy = concat<S>({a.xy, b.xy}, 1);
    s.hw = concat<S>({a.hw, b.hw}, 1);
    s.what = concat<S>({a.what, b.what}, 1);
    s.z_state = concat<S>({a.z_state, b.z_state}, 1);
    s.h_prior = concat<S>({a.h_prior, b.h_prior}, 1);
    s.c_prior = concat<S>({a.c_prior, b.c_prior}, 1);
    s.h_post = concat<S>({a.h_post, b.h_post}, 1);
    s.c_post = concat<S>({a.c_post, b.c_post}, 1);
    s.alive = concat<S>({a.alive, b.alive}, 1);
    int64_t B = a.ids.shape[0], Ka = a.ids.shape[1], Kb = b.ids.shape[1];
    s.ids = Tensor<int64_t>(Shape{B, Ka + Kb});
    for (int64_t i = 0; i < B; ++i) {
      for (int64_t k = 0; k < Ka; ++k) s.ids.at(i, k) = a.ids.at(i, k);
      for (int64_t k = 0; k < Kb; ++k) s.ids.at(i, Ka + k) = b.ids.at(i, k);
    }
    return s;
  }

  // Gather along K with per-batch indices.
  SlotState gather(const Tensor<int64_t>& idx) const {
    SlotState s;
    s.pres = batched_gather(pres, idx);
    s.depth = batched_gather(depth, idx);
    s.xy = batched_gather(xy, idx);
    s.hw = batched_gather(hw, idx);
    s.what = batched_gather(what, idx);
    s.z_state = batched_gather(z_state, idx);
    s.h_prior = batched_gather(h_prior, idx);
    s.c_prior = batched_gather(c_prior, idx);
    s.h_post = batched_gather(h_post, idx);
    s.c_post = batched_gather(c_post, idx);
    s.alive = batched_gather(alive, idx);
    int64_t B = idx.shape[0], Kp = idx.shape[1];
    s.ids = Tensor<int64_t>(Shape{B, Kp});
    for (int64_t i = 0; i < B; ++i)
      for (int64_t k = 0; k < Kp; ++k) s.ids.at(i, k) = ids.at(i, idx.at(i, k));
    return s;
  }

  // Detached copy (used when conditioning rollouts).
  SlotState detached() const {
    SlotState s = *this;
    s.pres = detach(pres);
    s.depth = detach(depth);
    s.xy = detach(xy);
    s.hw = detach(hw);
    s.what = detach(what);
    s.z_state = detach(z_state);
    s.h_prior = detach(h_prior);
    s.c_prior = detach(c_prior);
    s.h_post = detach(h_post);
    s.c_post = detach(c_post);
    s.alive = detach(alive);
    return s;
  }
};

}  // namespace gswm
