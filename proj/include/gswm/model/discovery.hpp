#pragma once

#include "gswm/model/config.hpp"
#include "gswm/model/propagation.hpp"

namespace gswm {

// Grid-based parallel discovery. Each of the H*W cells owns candidate latents
// (state, pres, depth, where, what) inferred from image features and a
// conditioning field built from the propagated objects. Priors are fixed;
// discovery runs only at inference.
template <class S>
struct DiscoveryModule {
  const ModelConfig* cfg = nullptr;
  Block<S> encoder;  // 6-channel input -> [B, E, H, W]
  Mlp<S> cond_head;  // explicit attrs -> conditioning features
  Mlp<S> head;       // [e_img, e_cond] -> per-cell latent parameters
  Tensor<S> centers;  // [HW, 2] cell centers, (x, y) in [-1, 1]

  DiscoveryModule() = default;
  DiscoveryModule(ParamStore<S>& ps, const ModelConfig& cfg_, Rng& rng) : cfg(&cfg_) {
    int64_t E = cfg->enc_dim, M = cfg->mlp_hidden;
    int64_t o_dim = 1 + 1 + 2 + 2 + cfg->z_what_dim;
    int64_t out_dim = 2 * cfg->z_state_dim + 1 + 2 * 1 + 2 * 4 + 2 * cfg->z_what_dim;
    BlockSpec spec;
    spec.in_channels = 6;
    spec.in_hw = cfg->image_hw;
    spec.grid_hw = cfg->grid_hw;
    spec.out_dim = E;
    spec.width = cfg->width_mult;
    encoder = build_block(ps, "disc.encoder", "discovery_encoder", spec, rng);
    cond_head = Mlp<S>(ps, "disc.cond", o_dim, {M, M}, E, rng);
    head = Mlp<S>(ps, "disc.head", 2 * E, {M, M}, out_dim, rng);

    int64_t G = cfg->grid_hw;
    centers = Tensor<S>(Shape{G * G, 2});
    for (int64_t i = 0; i < G; ++i)
      for (int64_t j = 0; j < G; ++j) {
        centers.at(i * G + j, 0) = S(2) * ((S)j + S(0.5)) / (S)G - S(1);  // x from column
        centers.at(i * G + j, 1) = S(2) * ((S)i + S(0.5)) / (S)G - S(1);  // y from row
      }
  }

  int64_t cells() const { return cfg->grid_hw * cfg->grid_hw; }

  // e_img from the frame and the background-subtracted frame.
  Var<S> encode_features(const Var<S>& x_t, const Var<S>& mu_bg) const {
    Var<S> inp = concat<S>({x_t, x_t - mu_bg}, 1);  // [B,6,H,W]
    return nchw_to_cells(encoder(inp));             // [B, HW, E]
  }

  // Gaussian-kernel weighted sum of propagated-object features per cell.
  Var<S> propagation_conditioning(const SlotState<S>& slots) const {
    int64_t B = slots.batch(), K = slots.count(), E = cfg->enc_dim, P = cells();
    Var<S> feats = reshape(cond_head(reshape(slots.attr_vec(), {B * K, -1})), {B, K, 1, E});
    Var<S> c = Var<S>::constant(centers.reshaped({1, 1, P, 2}));
    Var<S> diff = unsqueeze(slots.xy, 2) - c;                         // [B,K,P,2]
    Var<S> d2 = sum(square(diff), 3, true);                           // [B,K,P,1]
    S denom = S(2) * (S)(cfg->cond_kernel_sigma * cfg->cond_kernel_sigma);
    Var<S> kernel = vexp(d2 * (S(-1) / denom)) * unsqueeze(slots.alive, 2);  // [B,K,P,1]
    return sum(kernel * feats, 1, false);                             // [B,P,E]
  }

  struct Grid {
    GaussianParams<S> state, depth, where, what;  // [B*P, d]
    BernoulliParams<S> pres;                      // [B*P, 1]
    Var<S> z_state, z_pres, z_depth, z_where, z_what;
    int64_t B = 0, P = 0;
  };

  Grid infer_latents(const Var<S>& e_img, const Var<S>& e_cond, Rng& rng,
                     bool deterministic) const {
    int64_t B = e_img.shape()[0], P = cells();
    int64_t Ds = cfg->z_state_dim, Dw = cfg->z_what_dim;
    Var<S> raw = head(reshape(concat<S>({e_img, e_cond}, 2), {B * P, -1}));
    Grid g;
    g.B = B;
    g.P = P;
    int64_t off = 0;
    auto gauss = [&](int64_t d) {
      GaussianParams<S> p{slice(raw, 1, off, d), Var<S>()};
      off += d;
      p.stdev = softplus(slice(raw, 1, off, d)) + (S)1e-5;
      off += d;
      return p;
    };
    g.state = gauss(Ds);
    g.pres.prob = vsigmoid(slice(raw, 1, off, 1));
    off += 1;
    g.depth = gauss(1);
    g.where = gauss(4);
    g.what = gauss(Dw);

    auto draw = [&](const GaussianParams<S>& p) {
      return deterministic ? p.mean : sample_gaussian(p, rng);
    };
    g.z_state = draw(g.state);
    if (deterministic) {
      Tensor<S> hard(g.pres.prob.shape());
      for (int64_t i = 0; i < hard.numel(); ++i)
        hard[i] = g.pres.prob.val()[i] > (S)0.5 ? S(1) : S(0);
      g.z_pres = Var<S>::constant(std::move(hard));
    } else {
      g.z_pres = sample_relaxed_bernoulli(g.pres, (S)cfg->tau, rng);
    }
    g.z_depth = draw(g.depth);
    g.z_where = draw(g.where);
    g.z_what = draw(g.what);
    return g;
  }

  // Turn per-cell latents into object slots: sizes through a sigmoid, cell
  // locations offset by a bounded deviation from the cell center.
  SlotState<S> attributes(const Grid& g, const Var<S>& h0p, const Var<S>& c0p, const Var<S>& h0q,
                          const Var<S>& c0q) const {
    int64_t B = g.B, P = g.P, G = cfg->grid_hw;
    SlotState<S> s;
    s.pres = reshape(g.z_pres, {B, P, 1});
    s.depth = reshape(g.z_depth, {B, P, 1});
    s.what = reshape(g.z_what, {B, P, cfg->z_what_dim});
    s.z_state = reshape(g.z_state, {B, P, cfg->z_state_dim});
    Var<S> hw = vsigmoid(slice(g.z_where, 1, 0, 2));
    Var<S> xy_rel = vtanh(slice(g.z_where, 1, 2, 2)) * (S(2) / (S)G);
    Var<S> c = expand(Var<S>::constant(centers.reshaped({1, P, 2})), 0, B);
    s.hw = reshape(hw, {B, P, 2});
    s.xy = reshape(xy_rel, {B, P, 2}) + c;
    int64_t H = cfg->rnn_hidden;
    auto bc = [&](const Var<S>& v) {
      return expand(expand(reshape(v, {1, 1, H}), 1, P), 0, B);
    };
    s.h_prior = bc(h0p);
    s.c_prior = bc(c0p);
    s.h_post = bc(h0q);
    s.c_post = bc(c0q);
    s.alive = Var<S>::constant(Tensor<S>::full({B, P, 1}, S(1)));
    s.ids = Tensor<int64_t>(Shape{B, P});  // caller assigns fresh track ids
    return s;
  }

  // Per-cell KLs against the fixed priors, [B, P]. Conditional terms are
  // weighted by the (soft) presence sample.
  Var<S> prior_kl_map(const Grid& g) const {
    auto fixed = [&](double mean, double stdev, const Shape& sh) {
      return GaussianParams<S>{Var<S>::constant(Tensor<S>::full(sh, (S)mean)),
                               Var<S>::constant(Tensor<S>::full(sh, (S)stdev))};
    };
    BernoulliParams<S> pres_prior{
        Var<S>::constant(Tensor<S>::full(g.pres.prob.shape(), (S)cfg->disc_pres_prior))};
    Var<S> kl_pres = sum(kl_bernoulli_map(g.pres, pres_prior), 1, true);  // [B*P,1]

    Var<S> cond =
        sum(kl_gaussian_map(g.state, fixed(cfg->disc_state_prior_mean, cfg->disc_state_prior_stdev,
                                           g.state.mean.shape())),
            1, true) +
        sum(kl_gaussian_map(g.depth, fixed(cfg->disc_depth_prior_mean, cfg->disc_depth_prior_stdev,
                                           g.depth.mean.shape())),
            1, true) +
        sum(kl_gaussian_map(
                GaussianParams<S>{slice(g.where.mean, 1, 0, 2), slice(g.where.stdev, 1, 0, 2)},
                fixed(cfg->disc_hw_prior_mean, cfg->disc_hw_prior_stdev, Shape{g.B * g.P, 2})),
            1, true) +
        sum(kl_gaussian_map(
                GaussianParams<S>{slice(g.where.mean, 1, 2, 2), slice(g.where.stdev, 1, 2, 2)},
                fixed(cfg->disc_xy_prior_mean, cfg->disc_xy_prior_stdev, Shape{g.B * g.P, 2})),
            1, true) +
        sum(kl_gaussian_map(g.what, fixed(cfg->disc_what_prior_mean, cfg->disc_what_prior_stdev,
                                          g.what.mean.shape())),
            1, true);
    return reshape(kl_pres + g.z_pres * cond, {g.B, g.P});
  }

  Var<S> prior_kl(const Grid& g) const { return sum(prior_kl_map(g)); }
};

}  // namespace gswm
