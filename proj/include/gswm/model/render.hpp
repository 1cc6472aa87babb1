#pragma once

#include <numeric>

#include "gswm/model/config.hpp"
#include "gswm/model/slots.hpp"
#include "gswm/primitives.hpp"

namespace gswm {

template <class S>
struct RenderOutput {
  Var<S> mu;       // [B,3,H,W] composed reconstruction
  Var<S> mu_fg;    // [B,3,H,W]
  Var<S> alpha;    // [B,1,H,W]
  Var<S> y_full;   // [B,K,3,H,W] per-object placed appearance
  Var<S> a_full;   // [B,K,1,H,W] per-object placed mask
  Var<S> weights;  // [B,K,1,H,W]
};

// Top-K selection by presence, appearance decoding, depth-weighted
// compositing and the pixel-wise Gaussian likelihood.
template <class S>
struct RenderModule {
  const ModelConfig* cfg = nullptr;
  Block<S> glimpse_dec;

  RenderModule() = default;
  RenderModule(ParamStore<S>& ps, const ModelConfig& cfg_, Rng& rng) : cfg(&cfg_) {
    BlockSpec spec;
    spec.in_dim = cfg->glimpse_dec_in;
    glimpse_dec = build_block(ps, "render.glimpse_dec", "glimpse_decoder", spec, rng);
  }

  // Top-K by presence; deterministic tie-break keeps earlier candidates
  // (propagated objects come before discovered ones in the candidate array).
  static Tensor<int64_t> topk_indices(const Tensor<S>& pres, int64_t K) {
    int64_t B = pres.shape[0], Kc = pres.shape[1];
    Tensor<int64_t> idx(Shape{B, K});
    std::vector<int64_t> order((size_t)Kc);
    for (int64_t b = 0; b < B; ++b) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int64_t i, int64_t j) {
        return pres.at(b, i, 0) > pres.at(b, j, 0);
      });
      for (int64_t k = 0; k < K; ++k) idx.at(b, k) = order[(size_t)k];
    }
    return idx;
  }

  SlotState<S> select_objects(const SlotState<S>& candidates, int64_t K) const {
    int64_t Kc = candidates.count();
    // presence of dead candidates reads as below-zero so they sort last
    Tensor<S> score = candidates.pres.val();
    const Tensor<S>& alive = candidates.alive.val();
    for (int64_t i = 0; i < score.numel(); ++i)
      if (alive[i] < (S)0.5) score[i] = (S)-1;
    Tensor<int64_t> idx = topk_indices(score, std::min(K, Kc));
    SlotState<S> out = candidates.gather(idx);
    if (K > Kc) {
      // pad with dead slots
      SlotState<S> pad = SlotState<S>::zeros(candidates.batch(), K - Kc,
                                             candidates.what.shape()[2],
                                             candidates.z_state.shape()[2],
                                             candidates.h_prior.shape()[2]);
      out = SlotState<S>::concat_k(out, pad);
    }
    return out;
  }

  struct Decoded {
    Var<S> y_att, a_att;  // [B,K,3,g,g], [B,K,1,g,g] raw decoder outputs
    Var<S> y_hat, a_hat;  // presence-masked forms
  };

  Decoded decode_objects(const SlotState<S>& slots) const {
    int64_t B = slots.batch(), K = slots.count(), g = cfg->glimpse_hw;
    Var<S> z = pad_features(reshape(slots.what, {B * K, -1}), cfg->glimpse_dec_in);
    Var<S> maps = glimpse_dec(z);  // [B*K,4,g,g]
    Decoded d;
    d.y_att = reshape(slice(maps, 1, 0, 3), {B, K, 3, g, g});
    d.a_att = reshape(slice(maps, 1, 3, 1), {B, K, 1, g, g});
    Var<S> pres = reshape(slots.pres, {B, K, 1, 1, 1});
    d.a_hat = d.a_att * pres;
    d.y_hat = d.a_hat * d.y_att;
    return d;
  }

  RenderOutput<S> compose(const SlotState<S>& slots, const Decoded& d, const Var<S>& mu_bg,
                          S eps = (S)1e-6) const {
    int64_t B = slots.batch(), K = slots.count(), g = cfg->glimpse_hw, HW = cfg->image_hw;
    Var<S> centers = reshape(slots.xy, {B * K, 2});
    Var<S> sizes = clamp(reshape(slots.hw, {B * K, 2}), (S)1e-3, S(1));
    Var<S> y_full = st_place(reshape(d.y_hat, {B * K, 3, g, g}), centers, sizes, HW, HW);
    Var<S> a_full = st_place(reshape(d.a_hat, {B * K, 1, g, g}), centers, sizes, HW, HW);

    RenderOutput<S> out;
    out.y_full = reshape(y_full, {B, K, 3, HW, HW});
    out.a_full = reshape(a_full, {B, K, 1, HW, HW});
    Var<S> depth_sig = vsigmoid(reshape(slots.depth, {B, K, 1, 1, 1}));
    Var<S> num = out.a_full * depth_sig;           // [B,K,1,H,W]
    Var<S> den = sum(num, 1, true) + eps;          // [B,1,1,H,W]
    out.weights = num / den;
    out.mu_fg = sum(out.weights * out.y_full, 1, false);  // [B,3,H,W]
    out.alpha = sum(out.weights * out.a_full, 1, false);  // [B,1,H,W]
    out.mu = out.mu_fg + (S(1) - out.alpha) * mu_bg;
    return out;
  }

  // Pixel-wise Gaussian log-likelihood, summed over pixels and batch.
  Var<S> likelihood_logprob(const Var<S>& x, const Var<S>& mu) const {
    S sigma = (S)cfg->sigma_likelihood;
    S log_norm = S(0.5) * std::log(S(2) * (S)M_PI * sigma * sigma);
    Var<S> d = (x - mu) * (S(1) / sigma);
    return sum(square(d) * (S)(-0.5) - log_norm);
  }
};

}  // namespace gswm
