#pragma once

#include "gswm/model/config.hpp"
#include "gswm/model/slots.hpp"
#include "gswm/primitives.hpp"

namespace gswm {

enum class StepMode { Infer, Generate };

// Versatile propagation: object-state RNNs fed by object-object interaction
// and attention-on-environment encodings, a high-level per-object state
// latent, and gated attribute updates.
template <class S>
struct PropagationModule {
  const ModelConfig* cfg = nullptr;
  int64_t o_dim = 0, u_dim = 0, state_in = 0;

  Mlp<S> os_embed_prior, os_embed_post;
  LstmCell<S> os_prior, os_post;
  Mlp<S> self_prior, rel_prior, weight_prior;
  Mlp<S> self_post, rel_post, weight_post;
  Block<S> aoe_enc, prop_enc;
  Mlp<S> state_prior_head, state_post_head;
  Mlp<S> prop_size_head;
  Mlp<S> att_prior_head, gate_head;
  Mlp<S> att_post_head;  // only in the no-state ablation
  Var<S> h0_prior, c0_prior, h0_post, c0_post;

  PropagationModule() = default;
  PropagationModule(ParamStore<S>& ps, const ModelConfig& cfg_, Rng& rng) : cfg(&cfg_) {
    int64_t E = cfg->enc_dim, H = cfg->rnn_hidden, M = cfg->mlp_hidden, D = cfg->z_state_dim;
    o_dim = 1 + 1 + 2 + 2 + cfg->z_what_dim;
    u_dim = o_dim + (cfg->ablate_state ? 0 : D) + H;
    state_in = cfg->ablate_state ? H : D;  // input of attribute/gate heads
    int64_t rnn_in = o_dim + (cfg->ablate_state ? 0 : D) + E + E;
    int64_t att_out = 1 + 2 * 1 + 2 * 4 + 2 * cfg->z_what_dim;

    os_embed_prior = Mlp<S>(ps, "prop.os_embed_prior", rnn_in, {}, H, rng);
    os_embed_post = Mlp<S>(ps, "prop.os_embed_post", rnn_in, {}, H, rng);
    os_prior = LstmCell<S>(ps, "prop.os_prior", H, H, rng);
    os_post = LstmCell<S>(ps, "prop.os_post", H, H, rng);
    self_prior = Mlp<S>(ps, "prop.self_prior", u_dim, {M, M}, E, rng);
    rel_prior = Mlp<S>(ps, "prop.rel_prior", 2 * u_dim, {M, M}, E, rng);
    weight_prior = Mlp<S>(ps, "prop.weight_prior", 2 * u_dim, {M, M}, 1, rng);
    self_post = Mlp<S>(ps, "prop.self_post", u_dim, {M, M}, E, rng);
    rel_post = Mlp<S>(ps, "prop.rel_post", 2 * u_dim, {M, M}, E, rng);
    weight_post = Mlp<S>(ps, "prop.weight_post", 2 * u_dim, {M, M}, 1, rng);

    BlockSpec aoe;
    aoe.in_hw = cfg->glimpse_hw;
    aoe.out_dim = E;
    aoe.width = cfg->width_mult;
    aoe_enc = build_block(ps, "prop.aoe_enc", "aoe_encoder", aoe, rng);
    BlockSpec prop;
    prop.in_hw = cfg->glimpse_hw;
    prop.out_dim = E;
    prop.width = cfg->width_mult;
    prop_enc = build_block(ps, "prop.prop_enc", "proposal_encoder", prop, rng);

    if (!cfg->ablate_state) {
      state_prior_head = Mlp<S>(ps, "prop.state_prior", H, {M, M}, 2 * D, rng);
      state_post_head = Mlp<S>(ps, "prop.state_post", H + E, {M, M}, 2 * D, rng);
    } else {
      att_post_head = Mlp<S>(ps, "prop.att_post", H + E, {M, M}, att_out, rng);
    }
    prop_size_head = Mlp<S>(ps, "prop.size", H, {M, M}, 2, rng);
    att_prior_head = Mlp<S>(ps, "prop.att_prior", state_in, {M, M}, att_out, rng);
    gate_head = Mlp<S>(ps, "prop.gate", state_in, {M, M}, 1 + 4 + cfg->z_what_dim, rng);

    h0_prior = ps.add("prop.h0_prior", rng.randn<S>({H}));
    c0_prior = ps.add("prop.c0_prior", rng.randn<S>({H}));
    h0_post = ps.add("prop.h0_post", rng.randn<S>({H}));
    c0_post = ps.add("prop.c0_post", rng.randn<S>({H}));
  }

  // ---- interaction encoding ------------------------------------------------

  Var<S> object_repr(const SlotState<S>& slots, bool posterior) const {
    std::vector<Var<S>> parts = {slots.attr_vec()};
    if (!cfg->ablate_state) parts.push_back(slots.z_state);
    parts.push_back(posterior ? slots.h_post : slots.h_prior);
    return concat<S>(parts, 2);  // [B, K, u_dim]
  }

  // e_rel[k] = e[k,k] + sum_{j != k} w[k,j] e[k,j], softmax over j excluding
  // the diagonal and dead slots.
  Var<S> interaction_encoding(const SlotState<S>& slots, bool posterior) const {
    int64_t B = slots.batch(), K = slots.count(), E = cfg->enc_dim;
    const Mlp<S>& f_self = posterior ? self_post : self_prior;
    const Mlp<S>& f_rel = posterior ? rel_post : rel_prior;
    const Mlp<S>& f_w = posterior ? weight_post : weight_prior;

    Var<S> u = object_repr(slots, posterior);  // [B,K,U]
    Var<S> e_self = reshape(f_self(reshape(u, {B * K, u_dim})), {B, K, E});
    if (K == 1) return e_self;

    Var<S> ua = expand(unsqueeze(u, 2), 2, K);              // [B,K,K,U] (k index)
    Var<S> ub = expand(unsqueeze(u, 1), 1, K);              // [B,K,K,U] (j index)
    Var<S> pair = reshape(concat<S>({ua, ub}, 3), {B * K * K, 2 * u_dim});
    Var<S> e_pair = reshape(f_rel(pair), {B, K, K, E});
    Var<S> logits = reshape(f_w(pair), {B, K, K});

    // mask the diagonal and dead columns
    Tensor<S> valid({B, K, K});
    const Tensor<S>& alive = slots.alive.val();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t k = 0; k < K; ++k)
        for (int64_t j = 0; j < K; ++j)
          valid.at(b, k, j) = (j != k && alive.at(b, j, 0) > (S)0.5) ? S(1) : S(0);
    Var<S> vmask = Var<S>::constant(valid);
    Var<S> w = softmax_lastdim(logits + (vmask - S(1)) * (S)1e9) * vmask;  // [B,K,K]
    Var<S> weighted = sum(unsqueeze(w, 3) * e_pair, 2, false);             // [B,K,E]
    return e_self + weighted;
  }

  // ---- attention on environment ---------------------------------------------

  Var<S> aoe_encoding(const SlotState<S>& slots, const Var<S>& mu_bg) const {
    int64_t B = slots.batch(), K = slots.count(), E = cfg->enc_dim, g = cfg->glimpse_hw;
    if (cfg->ablate_sa) return Var<S>::constant(Tensor<S>::zeros({B, K, E}));
    if (cfg->ablate_aoe) {
      // attention-less: encode the full background once, share across objects
      int64_t factor = cfg->image_hw / g;
      Var<S> pooled = factor > 1 ? avg_pool2d(mu_bg, factor) : mu_bg;
      Var<S> e = aoe_enc(pooled);  // [B,E]
      return expand(unsqueeze(e, 1), 1, K);
    }
    Var<S> img = reshape(expand(unsqueeze(mu_bg, 1), 1, K),
                         {B * K, 3, cfg->image_hw, cfg->image_hw});
    Var<S> centers = reshape(slots.xy, {B * K, 2});
    Var<S> sizes = Var<S>::constant(Tensor<S>::full({B * K, 2}, (S)cfg->aoe_size));
    Var<S> glimpse = st_extract(img, centers, sizes, g, g);
    return reshape(aoe_enc(glimpse), {B, K, E});
  }

  // ---- OS-RNN steps ----------------------------------------------------------

  std::pair<Var<S>, Var<S>> osrnn_step(const SlotState<S>& slots, const Var<S>& e_rel,
                                       const Var<S>& e_ctx, bool posterior) const {
    int64_t B = slots.batch(), K = slots.count(), H = cfg->rnn_hidden;
    std::vector<Var<S>> parts = {slots.attr_vec()};
    if (!cfg->ablate_state) parts.push_back(slots.z_state);
    parts.push_back(e_ctx);
    parts.push_back(e_rel);
    Var<S> inp = reshape(concat<S>(parts, 2), {B * K, -1});
    Var<S> emb = posterior ? os_embed_post(inp) : os_embed_prior(inp);
    Var<S> h = reshape(posterior ? slots.h_post : slots.h_prior, {B * K, H});
    Var<S> c = reshape(posterior ? slots.c_post : slots.c_prior, {B * K, H});
    auto [h2, c2] = (posterior ? os_post : os_prior)(emb, h, c);
    return {reshape(h2, {B, K, H}), reshape(c2, {B, K, H})};
  }

  // ---- state latent ----------------------------------------------------------

  GaussianParams<S> state_prior_params(const Var<S>& h_bk) const {
    int64_t D = cfg->z_state_dim;
    Var<S> raw = state_prior_head(h_bk);
    return {slice(raw, 1, 0, D), softplus(slice(raw, 1, D, D)) + (S)1e-5};
  }

  GaussianParams<S> state_post_params(const Var<S>& h_bk, const Var<S>& e_prop_bk) const {
    int64_t D = cfg->z_state_dim;
    Var<S> raw = state_post_head(concat<S>({h_bk, e_prop_bk}, 1));
    return {slice(raw, 1, 0, D), softplus(slice(raw, 1, D, D)) + (S)1e-5};
  }

  // ---- proposal --------------------------------------------------------------

  // proposal window: previous location, size o_hw + s_min..s_max
  std::pair<Var<S>, Var<S>> propose_region(const SlotState<S>& slots, const Var<S>& x_t) const {
    int64_t B = slots.batch(), K = slots.count(), g = cfg->glimpse_hw;
    Var<S> h = reshape(slots.h_post, {B * K, cfg->rnn_hidden});
    Var<S> gate = vsigmoid(prop_size_head(h));  // [B*K,2]
    Var<S> s_prop = reshape(slots.hw, {B * K, 2}) + (S)cfg->s_min +
                    (S)(cfg->s_max - cfg->s_min) * gate;
    Var<S> img = reshape(expand(unsqueeze(x_t, 1), 1, K), {B * K, 3, cfg->image_hw, cfg->image_hw});
    Var<S> glimpse = st_extract(img, reshape(slots.xy, {B * K, 2}), s_prop, g, g);
    Var<S> e_prop = prop_enc(glimpse);  // [B*K,E]
    return {reshape(s_prop, {B, K, 2}), e_prop};
  }

  // ---- attribute latents -----------------------------------------------------

  struct AttrParams {
    BernoulliParams<S> pres;                 // [N,1]
    GaussianParams<S> depth, where, what;    // [N,1], [N,4] (hw, xy), [N,Dwhat]
  };

  AttrParams split_attr(const Var<S>& raw) const {
    int64_t Dw = cfg->z_what_dim;
    AttrParams p;
    int64_t off = 0;
    p.pres.prob = vsigmoid(slice(raw, 1, off, 1));
    off += 1;
    p.depth.mean = slice(raw, 1, off, 1);
    off += 1;
    p.depth.stdev = softplus(slice(raw, 1, off, 1)) + (S)1e-5;
    off += 1;
    p.where.mean = slice(raw, 1, off, 4);
    off += 4;
    p.where.stdev = softplus(slice(raw, 1, off, 4)) + (S)1e-5;
    off += 4;
    p.what.mean = slice(raw, 1, off, Dw);
    off += Dw;
    p.what.stdev = softplus(slice(raw, 1, off, Dw)) + (S)1e-5;
    return p;
  }

  struct AttrSamples {
    Var<S> pres, depth, where, what;  // [N,1],[N,1],[N,4],[N,Dwhat]
  };

  AttrSamples sample_attrs(const AttrParams& p, Rng& rng, bool force_pres_one,
                           bool deterministic) const {
    AttrSamples s;
    if (force_pres_one) {
      s.pres = Var<S>::constant(Tensor<S>::full(p.pres.prob.shape(), S(1)));
    } else if (deterministic) {
      Tensor<S> hard(p.pres.prob.shape());
      for (int64_t i = 0; i < hard.numel(); ++i)
        hard[i] = p.pres.prob.val()[i] > (S)0.5 ? S(1) : S(0);
      s.pres = Var<S>::constant(std::move(hard));
    } else {
      s.pres = sample_relaxed_bernoulli(p.pres, (S)cfg->tau, rng);
    }
    s.depth = deterministic ? p.depth.mean : sample_gaussian(p.depth, rng);
    s.where = deterministic ? p.where.mean : sample_gaussian(p.where, rng);
    s.what = deterministic ? p.what.mean : sample_gaussian(p.what, rng);
    return s;
  }

  // ---- gated attribute updates ------------------------------------------------

  SlotState<S> update_attributes(const SlotState<S>& slots, const AttrSamples& z,
                                 const Var<S>& gate_input_bk) const {
    int64_t B = slots.batch(), K = slots.count(), Dw = cfg->z_what_dim;
    Var<S> gates = vsigmoid(gate_head(gate_input_bk));  // [B*K, 1+4+Dw]
    auto g_depth = reshape(slice(gates, 1, 0, 1), {B, K, 1});
    auto g_hw = reshape(slice(gates, 1, 1, 2), {B, K, 2});
    auto g_xy = reshape(slice(gates, 1, 3, 2), {B, K, 2});
    auto g_what = reshape(slice(gates, 1, 5, Dw), {B, K, Dw});

    auto z_pres = reshape(z.pres, {B, K, 1});
    auto z_depth = reshape(z.depth, {B, K, 1});
    auto z_hw = reshape(slice(z.where, 1, 0, 2), {B, K, 2});
    auto z_xy = reshape(slice(z.where, 1, 2, 2), {B, K, 2});
    auto z_what = reshape(z.what, {B, K, Dw});

    SlotState<S> out = slots;
    out.pres = slots.pres * z_pres;
    out.depth = slots.depth + (S)cfg->c_depth * g_depth * z_depth;
    out.xy = clamp(slots.xy + (S)cfg->c_xy * g_xy * vtanh(z_xy), S(-1), S(1));
    out.hw = clamp(slots.hw + (S)cfg->c_hw * g_hw * vtanh(z_hw), (S)1e-3, S(1));
    out.what = slots.what + (S)cfg->c_what * g_what * vtanh(z_what);
    return out;
  }

  // ---- full propagation step ---------------------------------------------------

  struct StepResult {
    SlotState<S> slots;
    Var<S> kl_state_map;  // [B,K,1] alive-masked per-object KL (Infer only)
    Var<S> kl_aux_map;    // [B,K,1] alive-masked presence regularizer (Infer only)
    BernoulliParams<S> pres_params;  // [B*K,1] conditional presence probabilities
    Var<S> logratio_map;  // [B,K,1] constant pointwise log p - log q at the sample
  };

  // Pointwise Gaussian log-density ratio log p(z) - log q(z), as a constant.
  static Tensor<S> gaussian_logratio(const Tensor<S>& z, const GaussianParams<S>& q,
                                     const GaussianParams<S>& p) {
    Tensor<S> out(Shape{z.shape[0]});
    int64_t D = z.shape[1];
    auto ld = [](S x, S m, S s) {
      S d = (x - m) / s;
      return S(-0.5) * d * d - std::log(s);
    };
    for (int64_t n = 0; n < z.shape[0]; ++n) {
      S acc = 0;
      for (int64_t d = 0; d < D; ++d) {
        int64_t i = n * D + d;
        acc += ld(z[i], p.mean.val()[i], p.stdev.val()[i]) -
               ld(z[i], q.mean.val()[i], q.stdev.val()[i]);
      }
      out[n] = acc;
    }
    return out;
  }

  // One step of v-prop. The encodings are computed from the carried slots and
  // the previous background (time t-1 quantities feeding the RNN update at t).
  StepResult step(const SlotState<S>& slots, const Var<S>& prev_mu_bg, const Var<S>& x_t,
                  StepMode mode, Rng& rng, bool deterministic) const {
    int64_t B = slots.batch(), K = slots.count();
    bool infer = mode == StepMode::Infer;
    if (infer && !x_t.defined())
      throw std::invalid_argument("propagate_step: infer mode requires the current frame");

    StepResult out;
    out.slots = slots;
    Var<S> alive_mask = slots.alive;  // [B,K,1] constant

    Var<S> e_rel = interaction_encoding(slots, /*posterior=*/false);
    Var<S> e_ctx = aoe_encoding(slots, prev_mu_bg);
    auto [h_prior, c_prior] = osrnn_step(slots, e_rel, e_ctx, /*posterior=*/false);
    out.slots.h_prior = h_prior;
    out.slots.c_prior = c_prior;

    Var<S> h_prior_bk = reshape(h_prior, {B * K, cfg->rnn_hidden});
    Var<S> gate_input;  // z_state (or h in the no-state ablation), [B*K, .]
    Var<S> attr_raw;

    if (infer) {
      Var<S> e_rel_post = interaction_encoding(slots, /*posterior=*/true);
      auto [h_post, c_post] = osrnn_step(slots, e_rel_post, e_ctx, /*posterior=*/true);
      out.slots.h_post = h_post;
      out.slots.c_post = c_post;
      auto [s_prop, e_prop] = propose_region(out.slots, x_t);
      (void)s_prop;
      Var<S> h_post_bk = reshape(h_post, {B * K, cfg->rnn_hidden});

      if (!cfg->ablate_state) {
        GaussianParams<S> q = state_post_params(h_post_bk, e_prop);
        GaussianParams<S> p = state_prior_params(h_prior_bk);
        Var<S> z = deterministic ? q.mean : sample_gaussian(q, rng);
        out.slots.z_state = reshape(z, {B, K, cfg->z_state_dim});
        Var<S> klmap = reshape(sum(kl_gaussian_map(q, p), 1, true), {B, K, 1});
        out.kl_state_map = klmap * alive_mask;
        out.logratio_map = Var<S>::constant(gaussian_logratio(z.val(), q, p).reshaped({B, K, 1})) *
                           detach(alive_mask);
        gate_input = z;
        attr_raw = att_prior_head(z);
      } else {
        // attributes inferred directly; KL between posterior and prior attrs
        Var<S> raw_q = att_post_head(concat<S>({h_post_bk, e_prop}, 1));
        Var<S> raw_p = att_prior_head(h_prior_bk);
        AttrParams q = split_attr(raw_q), p = split_attr(raw_p);
        Var<S> klmap = kl_bernoulli_map(q.pres, p.pres) +
                       sum(kl_gaussian_map(q.depth, p.depth), 1, true) +
                       sum(kl_gaussian_map(q.where, p.where), 1, true) +
                       sum(kl_gaussian_map(q.what, p.what), 1, true);
        out.kl_state_map = reshape(klmap, {B, K, 1}) * alive_mask;
        out.logratio_map = detach(out.kl_state_map) * S(-1);  // expectation-level fallback
        gate_input = h_post_bk;
        attr_raw = raw_q;
      }
    } else {
      if (!cfg->ablate_state) {
        GaussianParams<S> p = state_prior_params(h_prior_bk);
        Var<S> z = deterministic ? p.mean : sample_gaussian(p, rng);
        out.slots.z_state = reshape(z, {B, K, cfg->z_state_dim});
        gate_input = z;
        attr_raw = att_prior_head(z);
      } else {
        gate_input = h_prior_bk;
        attr_raw = att_prior_head(h_prior_bk);
      }
    }

    AttrParams attrs = split_attr(attr_raw);
    out.pres_params = attrs.pres;
    bool force_pres = mode == StepMode::Generate;
    AttrSamples z = sample_attrs(attrs, rng, force_pres, deterministic);
    out.slots = update_attributes(out.slots, z, gate_input);

    if (infer) {
      // auxiliary presence regularizer against Bern(aux_pres_prob)
      BernoulliParams<S> tiny{
          Var<S>::constant(Tensor<S>::full(attrs.pres.prob.shape(), (S)cfg->aux_pres_prob))};
      Var<S> aux = reshape(kl_bernoulli_map(attrs.pres, tiny), {B, K, 1});
      out.kl_aux_map = aux * alive_mask;
    }
    return out;
  }
};

}  // namespace gswm
