#pragma once

#include "gswm/model/config.hpp"
#include "gswm/primitives.hpp"

namespace gswm {

template <class S>
struct ContextState {
  Var<S> z_ctx;                              // [B, Dctx]
  Var<S> h_prior, c_prior, h_post, c_post;   // [B, H]
  Var<S> mu_bg;                              // [B, 3, H, W]
};

// Global context latent dynamics and background decoding. The prior and the
// posterior share one background decoder. With background modeling disabled
// the module only hands out zero backgrounds.
template <class S>
struct ContextModule {
  const ModelConfig* cfg = nullptr;
  LstmCell<S> rnn_prior, rnn_post;
  Mlp<S> head_prior, head_post;
  Block<S> encoder, decoder;
  Var<S> h0_prior, c0_prior, h0_post, c0_post;

  ContextModule() = default;
  ContextModule(ParamStore<S>& ps, const ModelConfig& cfg_, Rng& rng) : cfg(&cfg_) {
    if (!cfg->background) return;
    int64_t D = cfg->z_ctx_dim, H = cfg->rnn_hidden, E = cfg->enc_dim, M = cfg->mlp_hidden;
    rnn_prior = LstmCell<S>(ps, "ctx.rnn_prior", D, H, rng);
    rnn_post = LstmCell<S>(ps, "ctx.rnn_post", D, H, rng);
    head_prior = Mlp<S>(ps, "ctx.head_prior", H, {M, M}, 2 * D, rng);
    head_post = Mlp<S>(ps, "ctx.head_post", H + E, {M, M}, 2 * D, rng);
    BlockSpec enc;
    enc.in_channels = 3;
    enc.in_hw = cfg->image_hw;
    enc.out_dim = E;
    enc.width = cfg->width_mult;
    encoder = build_block(ps, "ctx.encoder", "bg_encoder", enc, rng);
    BlockSpec dec;
    dec.in_dim = D;
    dec.out_hw = cfg->image_hw;
    dec.width = cfg->width_mult;
    decoder = build_block(ps, "ctx.decoder", "bg_decoder", dec, rng);
    h0_prior = ps.add("ctx.h0_prior", rng.randn<S>({H}));
    c0_prior = ps.add("ctx.c0_prior", rng.randn<S>({H}));
    h0_post = ps.add("ctx.h0_post", rng.randn<S>({H}));
    c0_post = ps.add("ctx.c0_post", rng.randn<S>({H}));
  }

  ContextState<S> init_state(int64_t B) const {
    ContextState<S> st;
    st.mu_bg = Var<S>::constant(Tensor<S>::zeros({B, 3, cfg->image_hw, cfg->image_hw}));
    if (!cfg->background) return st;
    auto bc = [&](const Var<S>& v) { return expand(reshape(v, {1, cfg->rnn_hidden}), 0, B); };
    st.z_ctx = Var<S>::constant(Tensor<S>::zeros({B, cfg->z_ctx_dim}));
    st.h_prior = bc(h0_prior);
    st.c_prior = bc(c0_prior);
    st.h_post = bc(h0_post);
    st.c_post = bc(c0_post);
    return st;
  }

  GaussianParams<S> split_params(const Var<S>& raw) const {
    int64_t D = cfg->z_ctx_dim;
    return {slice(raw, 1, 0, D), softplus(slice(raw, 1, D, D)) + (S)1e-5};
  }

  // Advance the prior; sample a new context and decode the background.
  std::pair<GaussianParams<S>, ContextState<S>> prior_step(const ContextState<S>& st, Rng& rng,
                                                           bool deterministic) const {
    if (!cfg->background) return {{}, st};
    ContextState<S> out = st;
    auto [h, c] = rnn_prior(st.z_ctx, st.h_prior, st.c_prior);
    out.h_prior = h;
    out.c_prior = c;
    GaussianParams<S> p = split_params(head_prior(h));
    out.z_ctx = deterministic ? p.mean : sample_gaussian(p, rng);
    out.mu_bg = decoder(out.z_ctx);
    return {p, out};
  }

  struct PosteriorResult {
    GaussianParams<S> prior, posterior;
    ContextState<S> state;
  };

  // Advance prior and posterior RNNs on the previous sample, infer the new
  // context from the frame encoding, decode the background.
  PosteriorResult posterior_step(const ContextState<S>& st, const Var<S>& x_t, Rng& rng,
                                 bool deterministic) const {
    if (!cfg->background) return {{}, {}, st};
    PosteriorResult out;
    out.state = st;
    auto [hp, cp] = rnn_prior(st.z_ctx, st.h_prior, st.c_prior);
    auto [hq, cq] = rnn_post(st.z_ctx, st.h_post, st.c_post);
    out.state.h_prior = hp;
    out.state.c_prior = cp;
    out.state.h_post = hq;
    out.state.c_post = cq;
    out.prior = split_params(head_prior(hp));
    Var<S> e = encoder(x_t);
    out.posterior = split_params(head_post(concat<S>({hq, e}, 1)));
    out.state.z_ctx = deterministic ? out.posterior.mean : sample_gaussian(out.posterior, rng);
    out.state.mu_bg = decoder(out.state.z_ctx);
    return out;
  }
};

}  // namespace gswm
