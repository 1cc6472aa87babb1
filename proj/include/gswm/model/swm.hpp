#pragma once

#include "gswm/metrics.hpp"
#include "gswm/model/context.hpp"
#include "gswm/model/discovery.hpp"
#include "gswm/model/propagation.hpp"
#include "gswm/model/render.hpp"

namespace gswm {

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class S>
Var<S> sum_except_batch(const Var<S>& v) {
  return sum(reshape(v, {v.shape()[0], -1}), 1, false);  // [B]
}

template <class S>
struct Carry {
  SlotState<S> slots;
  ContextState<S> ctx;
  std::vector<int64_t> next_id;  // fresh track-id counters per batch element
};

// Per-timestep loss parts ([B] each) and detached snapshots.
template <class S>
struct StepTrace {
  Var<S> recon_ll, kl_ctx, kl_state, kl_aux_pres, kl_disc;  // [B]
  Var<S> step_loss;                                         // [B], exact sum of parts
  Tensor<S> mu;                                             // detached reconstruction
  std::vector<std::vector<TrackEntry>> slots_view;          // per batch element
  Tensor<S> logw;  // [B] per-sample importance log-weight (optional)
};

template <class S>
class Gswm {
 public:
  ModelConfig cfg;
  ParamStore<S> params;
  ContextModule<S> context;
  PropagationModule<S> prop;
  DiscoveryModule<S> disc;
  RenderModule<S> render;

  explicit Gswm(ModelConfig cfg_, uint64_t init_seed = 1) : cfg(std::move(cfg_)) {
    cfg.validate();
    Rng rng(splitmix64(init_seed));
    context = ContextModule<S>(params, cfg, rng);
    prop = PropagationModule<S>(params, cfg, rng);
    disc = DiscoveryModule<S>(params, cfg, rng);
    render = RenderModule<S>(params, cfg, rng);
  }

  Carry<S> init_carry(int64_t B) const {
    Carry<S> c;
    c.slots = SlotState<S>::zeros(B, cfg.max_objects, cfg.z_what_dim, cfg.z_state_dim,
                                  cfg.rnn_hidden);
    c.ctx = context.init_state(B);
    c.next_id.assign((size_t)B, 0);
    return c;
  }

  struct StepOptions {
    bool deterministic = false;
    bool discovery = true;
    bool bg_only = false;     // background-reconstruction phase
    bool track_logw = false;  // collect importance log-weights
  };

  // Timestep-indexed decision: discovery is never dropped on the first step
  // and never dropped outside training.
  static bool apply_discovery_dropout(int64_t t_index, Rng& rng, double rate, bool training) {
    if (!training || t_index == 0) return false;
    return rng.uniform() < rate;
  }

  // Suppress discovered objects overlapping an alive propagated object.
  // Returns a constant 0/1 keep mask of shape [B, P, 1]; the forcing carries
  // no gradient.
  Tensor<S> rejection_keep_mask(const SlotState<S>& propagated,
                                const SlotState<S>& discovered) const {
    int64_t B = discovered.batch(), P = discovered.count(), K = propagated.count();
    Tensor<S> keep(Shape{B, P, 1}, S(1));
    const Tensor<S>& pxy = propagated.xy.val();
    const Tensor<S>& phw = propagated.hw.val();
    const Tensor<S>& ppres = propagated.pres.val();
    const Tensor<S>& palive = propagated.alive.val();
    const Tensor<S>& dxy = discovered.xy.val();
    const Tensor<S>& dhw = discovered.hw.val();
    auto iou = [](double cxa, double cya, double ha, double wa, double cxb, double cyb, double hb,
                  double wb) {
      auto inter = [](double ca, double la, double cb, double lb) {
        double lo = std::max(ca - la / 2, cb - lb / 2), hi = std::min(ca + la / 2, cb + lb / 2);
        return std::max(0.0, hi - lo);
      };
      double iw = inter(cxa, wa, cxb, wb), ih = inter(cya, ha, cyb, hb);
      double uni = ha * wa + hb * wb - iw * ih;
      return uni <= 0 ? 0.0 : iw * ih / uni;
    };
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < P; ++p) {
        for (int64_t k = 0; k < K; ++k) {
          if (palive.at(b, k, 0) < (S)0.5 || ppres.at(b, k, 0) <= (S)0.5) continue;
          double v = iou((double)dxy.at(b, p, 0), (double)dxy.at(b, p, 1),
                         (double)dhw.at(b, p, 0), (double)dhw.at(b, p, 1),
                         (double)pxy.at(b, k, 0), (double)pxy.at(b, k, 1),
                         (double)phw.at(b, k, 0), (double)phw.at(b, k, 1));
          if (v > cfg.rejection_iou) {
            keep.at(b, p, 0) = S(0);
            break;
          }
        }
      }
    return keep;
  }

  // Slots with presence above threshold, as metric track entries.
  static std::vector<std::vector<TrackEntry>> slots_to_tracks(const SlotState<S>& slots,
                                                              double threshold = 0.5) {
    int64_t B = slots.batch(), K = slots.count();
    std::vector<std::vector<TrackEntry>> out((size_t)B);
    const Tensor<S>& pres = slots.pres.val();
    const Tensor<S>& alive = slots.alive.val();
    const Tensor<S>& xy = slots.xy.val();
    const Tensor<S>& hw = slots.hw.val();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t k = 0; k < K; ++k) {
        if (alive.at(b, k, 0) < (S)0.5 || (double)pres.at(b, k, 0) <= threshold) continue;
        TrackEntry e;
        e.id = slots.ids.at(b, k);
        e.center = {((double)xy.at(b, k, 0) + 1.0) / 2.0, ((double)xy.at(b, k, 1) + 1.0) / 2.0};
        e.bbox_hw = {(double)hw.at(b, k, 0), (double)hw.at(b, k, 1)};
        e.score = (double)pres.at(b, k, 0);
        out[(size_t)b].push_back(e);
      }
    return out;
  }

  std::pair<Carry<S>, StepTrace<S>> infer_step(const Carry<S>& carry, const Var<S>& x_t, Rng& rng,
                                               const StepOptions& opt) const {
    int64_t B = x_t.shape()[0];
    Carry<S> next = carry;
    StepTrace<S> trace;
    Var<S> zero_b = Var<S>::constant(Tensor<S>::zeros({B}));
    trace.kl_ctx = zero_b;
    trace.kl_state = zero_b;
    trace.kl_aux_pres = zero_b;
    trace.kl_disc = zero_b;

    Var<S> prev_mu_bg = carry.ctx.mu_bg;  // background from t-1 feeds the encodings
    GaussianParams<S> ctx_prior, ctx_post;
    if (cfg.background) {
      auto res = context.posterior_step(carry.ctx, x_t, rng, opt.deterministic);
      next.ctx = res.state;
      ctx_prior = res.prior;
      ctx_post = res.posterior;
      trace.kl_ctx = sum_except_batch(kl_gaussian_map(res.posterior, res.prior));
    }

    if (opt.bg_only) {
      trace.recon_ll = sum_except_batch(gaussian_ll_map(x_t, next.ctx.mu_bg));
      finalize_trace(trace, next, x_t, rng, opt, nullptr, nullptr, ctx_prior, ctx_post);
      return {std::move(next), std::move(trace)};
    }

    auto prop_res = prop.step(carry.slots, prev_mu_bg, x_t, StepMode::Infer, rng,
                              opt.deterministic);
    trace.kl_state = per_batch(prop_res.kl_state_map, B);
    trace.kl_aux_pres = per_batch(prop_res.kl_aux_map, B);

    SlotState<S> candidates = prop_res.slots;
    typename DiscoveryModule<S>::Grid grid;
    bool did_discovery = opt.discovery;
    if (did_discovery) {
      Var<S> e_img = disc.encode_features(x_t, next.ctx.mu_bg);
      Var<S> e_cond = disc.propagation_conditioning(prop_res.slots);
      grid = disc.infer_latents(e_img, e_cond, rng, opt.deterministic);
      trace.kl_disc = per_batch_cells(disc.prior_kl_map(grid), B);
      SlotState<S> discovered =
          disc.attributes(grid, prop.h0_prior, prop.c0_prior, prop.h0_post, prop.c0_post);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t p = 0; p < discovered.count(); ++p)
          discovered.ids.at(b, p) = next.next_id[(size_t)b]++;
      Tensor<S> keep = rejection_keep_mask(prop_res.slots, discovered);
      discovered.pres = discovered.pres * Var<S>::constant(std::move(keep));
      candidates = SlotState<S>::concat_k(prop_res.slots, discovered);
    }

    next.slots = render.select_objects(candidates, cfg.max_objects);
    auto decoded = render.decode_objects(next.slots);
    RenderOutput<S> rout = render.compose(next.slots, decoded, next.ctx.mu_bg);
    trace.recon_ll = sum_except_batch(gaussian_ll_map(x_t, rout.mu));
    finalize_trace(trace, next, x_t, rng, opt, &prop_res, did_discovery ? &grid : nullptr,
                   ctx_prior, ctx_post, &rout);
    return {std::move(next), std::move(trace)};
  }

  struct GenerateResult {
    RenderOutput<S> render;
    std::vector<std::vector<TrackEntry>> slots_view;
  };

  std::pair<Carry<S>, GenerateResult> generate_step(const Carry<S>& carry, Rng& rng,
                                                    bool deterministic) const {
    Carry<S> next = carry;
    Var<S> prev_mu_bg = carry.ctx.mu_bg;
    if (cfg.background) {
      auto [p, st] = context.prior_step(carry.ctx, rng, deterministic);
      next.ctx = st;
    }
    auto prop_res = prop.step(carry.slots, prev_mu_bg, Var<S>(), StepMode::Generate, rng,
                              deterministic);
    next.slots = prop_res.slots;
    GenerateResult out;
    auto decoded = render.decode_objects(next.slots);
    out.render = render.compose(next.slots, decoded, next.ctx.mu_bg);
    out.slots_view = slots_to_tracks(next.slots);
    return {std::move(next), std::move(out)};
  }

  // Negative ELBO per batch element, summed over the traced steps; the
  // auxiliary presence term is included while enabled.
  Var<S> elbo_loss(const std::vector<StepTrace<S>>& traces, bool include_aux) const {
    Var<S> total;
    for (auto& t : traces) {
      Var<S> step = t.step_loss;
      if (!include_aux) step = step - t.kl_aux_pres;
      total = total.defined() ? total + step : step;
    }
    return mean(total);
  }

  struct RolloutResult {
    std::vector<TrackSet> recon_tracks;                // [B] conditioning phase
    std::vector<std::vector<TrackSet>> gen_tracks;     // [sample][B]
    std::vector<std::vector<Tensor<S>>> gen_frames;    // [sample][t] detached mu, [B,3,H,W]
    std::vector<Tensor<S>> recon_frames;               // [t]
  };

  // Condition once on the first n_cond frames, then branch n_samples
  // generations from the same carry with fresh noise.
  RolloutResult rollout(const Tensor<S>& frames_blthw, int64_t n_cond, int64_t n_gen,
                        int64_t n_samples, Rng& rng, bool deterministic) const {
    NoGradGuard ng;
    int64_t B = frames_blthw.shape[0], T = frames_blthw.shape[1];
    if (n_cond > T) throw std::invalid_argument("rollout: n_cond exceeds available frames");
    int64_t H = frames_blthw.shape[3], W = frames_blthw.shape[4];

    RolloutResult out;
    out.recon_tracks.resize((size_t)B);
    Carry<S> carry = init_carry(B);
    StepOptions opt;
    opt.deterministic = deterministic;
    for (int64_t t = 0; t < n_cond; ++t) {
      Tensor<S> frame(Shape{B, 3, H, W});
      for (int64_t b = 0; b < B; ++b)
        std::copy_n(frames_blthw.ptr() + (b * T + t) * 3 * H * W, 3 * H * W,
                    frame.ptr() + b * 3 * H * W);
      auto [next, trace] = infer_step(carry, Var<S>::constant(std::move(frame)), rng, opt);
      carry = std::move(next);
      out.recon_frames.push_back(trace.mu);
      for (int64_t b = 0; b < B; ++b)
        out.recon_tracks[(size_t)b].frames.push_back(trace.slots_view[(size_t)b]);
    }
    for (int64_t s = 0; s < n_samples; ++s) {
      Carry<S> branch = carry;
      std::vector<TrackSet> tracks((size_t)B);
      std::vector<Tensor<S>> frames;
      for (int64_t t = 0; t < n_gen; ++t) {
        auto [next, gen] = generate_step(branch, rng, deterministic);
        branch = std::move(next);
        frames.push_back(gen.render.mu.val());
        for (int64_t b = 0; b < B; ++b)
          tracks[(size_t)b].frames.push_back(gen.slots_view[(size_t)b]);
      }
      out.gen_tracks.push_back(std::move(tracks));
      out.gen_frames.push_back(std::move(frames));
    }
    return out;
  }

 private:
  // elementwise Gaussian log density with the configured likelihood sigma
  Var<S> gaussian_ll_map(const Var<S>& x, const Var<S>& mu) const {
    S sigma = (S)cfg.sigma_likelihood;
    S log_norm = S(0.5) * std::log(S(2) * (S)M_PI * sigma * sigma);
    return square((x - mu) * (S(1) / sigma)) * (S)(-0.5) - log_norm;
  }

  static Var<S> per_batch(const Var<S>& masked_map_bk1, int64_t B) {
    if (!masked_map_bk1.defined()) return Var<S>::constant(Tensor<S>::zeros({B}));
    return sum_except_batch(masked_map_bk1);
  }

  static Var<S> per_batch_cells(const Var<S>& map_bp, int64_t B) {
    if (!map_bp.defined()) return Var<S>::constant(Tensor<S>::zeros({B}));
    return sum_except_batch(map_bp);
  }

  void finalize_trace(StepTrace<S>& trace, const Carry<S>& next, const Var<S>& x_t, Rng& rng,
                      const StepOptions& opt,
                      const typename PropagationModule<S>::StepResult* prop_res,
                      const typename DiscoveryModule<S>::Grid* grid,
                      const GaussianParams<S>& ctx_prior, const GaussianParams<S>& ctx_post,
                      const RenderOutput<S>* rout = nullptr) const {
    trace.step_loss =
        Var<S>::scalar(S(0)) - trace.recon_ll + trace.kl_ctx + trace.kl_state + trace.kl_disc +
        trace.kl_aux_pres;
    for (S v : trace.step_loss.val().data)
      if (!std::isfinite(v))
        throw TrainingDiverged("non-finite loss in inference step (recon=" +
                               std::to_string((double)trace.recon_ll.val()[0]) + ")");
    trace.mu = rout ? rout->mu.val() : next.ctx.mu_bg.val();
    if (!opt.bg_only) trace.slots_view = slots_to_tracks(next.slots);
    if (opt.track_logw)
      trace.logw = importance_logw(trace, next, ctx_prior, ctx_post, prop_res, grid);
    (void)x_t;
    (void)rng;
  }

  // log w = log p(x|z) + log p(z) - log q(z|x) on the traced sample. The
  // attribute latents are drawn from their prior conditionals on both sides,
  // so those terms cancel; the presence weighting of discovery conditionals
  // mirrors the KL computation.
  Tensor<S> importance_logw(const StepTrace<S>& trace, const Carry<S>& next,
                            const GaussianParams<S>& ctx_prior, const GaussianParams<S>& ctx_post,
                            const typename PropagationModule<S>::StepResult* prop_res,
                            const typename DiscoveryModule<S>::Grid* grid) const {
    int64_t B = trace.recon_ll.shape()[0];
    Tensor<S> logw(Shape{B});
    for (int64_t b = 0; b < B; ++b) logw[b] = trace.recon_ll.val()[b];

    auto gauss_ld = [](S x, S m, S s) {
      S d = (x - m) / s;
      return S(-0.5) * d * d - std::log(s) - S(0.5) * std::log(S(2) * (S)M_PI);
    };
    if (cfg.background && ctx_post.mean.defined()) {
      const Tensor<S>& z = next.ctx.z_ctx.val();
      for (int64_t b = 0; b < B; ++b) {
        S acc = 0;
        for (int64_t d = 0; d < cfg.z_ctx_dim; ++d) {
          int64_t i = b * cfg.z_ctx_dim + d;
          acc += gauss_ld(z[i], ctx_prior.mean.val()[i], ctx_prior.stdev.val()[i]) -
                 gauss_ld(z[i], ctx_post.mean.val()[i], ctx_post.stdev.val()[i]);
        }
        logw[b] += acc;
      }
    }
    if (prop_res && prop_res->kl_state_map.defined()) {
      // E_q[log p - log q] = -KL per object; use the sampled pointwise ratio
      const Tensor<S>& m = prop_res->logratio_map.val();  // [B,K,1]
      int64_t K = m.shape[1];
      for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < K; ++k) logw[b] += m.at(b, k, 0);
    }
    if (grid) {
      Tensor<S> dl = discovery_logratio(*grid);
      for (int64_t b = 0; b < B; ++b) logw[b] += dl[b];
    }
    return logw;
  }

  Tensor<S> discovery_logratio(const typename DiscoveryModule<S>::Grid& g) const {
    int64_t B = g.B, P = g.P;
    Tensor<S> out(Shape{B});
    auto gauss_ld = [](S x, S m, S s) {
      S d = (x - m) / s;
      return S(-0.5) * d * d - std::log(s) - S(0.5) * std::log(S(2) * (S)M_PI);
    };
    // binary-concrete log density ratio at the sampled y for two probabilities
    S tau = (S)cfg.tau;
    auto bc_logratio = [&](S y, S rho_q, S rho_p) {
      y = std::clamp(y, (S)kProbEps, S(1) - (S)kProbEps);
      rho_q = std::clamp(rho_q, (S)kProbEps, S(1) - (S)kProbEps);
      rho_p = std::clamp(rho_p, (S)kProbEps, S(1) - (S)kProbEps);
      S aq = std::log(rho_q) - std::log(S(1) - rho_q);
      S ap = std::log(rho_p) - std::log(S(1) - rho_p);
      auto logaddexp = [](S a, S b) { return std::max(a, b) + std::log1p(std::exp(-std::abs(a - b))); };
      S ly = std::log(y), l1y = std::log(S(1) - y);
      S zq = logaddexp(aq - tau * ly, -tau * l1y);
      S zp = logaddexp(ap - tau * ly, -tau * l1y);
      return (ap - aq) - S(2) * (zp - zq);
    };
    auto ratio_block = [&](const GaussianParams<S>& q, S pm, S ps, const Var<S>& zv, int64_t bp,
                           int64_t d0, int64_t d) {
      S acc = 0;
      for (int64_t i = d0; i < d0 + d; ++i) {
        S z = zv.val()[bp * zv.shape()[1] + i];
        acc += gauss_ld(z, (S)pm, (S)ps) -
               gauss_ld(z, q.mean.val()[bp * q.mean.shape()[1] + i],
                        q.stdev.val()[bp * q.stdev.shape()[1] + i]);
      }
      return acc;
    };
    for (int64_t b = 0; b < B; ++b) {
      S acc = 0;
      for (int64_t p = 0; p < P; ++p) {
        int64_t bp = b * P + p;
        S y = g.z_pres.val()[bp];
        acc += bc_logratio(y, g.pres.prob.val()[bp], (S)cfg.disc_pres_prior);
        S cond = ratio_block(g.state, (S)cfg.disc_state_prior_mean, (S)cfg.disc_state_prior_stdev,
                             g.z_state, bp, 0, cfg.z_state_dim) +
                 ratio_block(g.depth, (S)cfg.disc_depth_prior_mean, (S)cfg.disc_depth_prior_stdev,
                             g.z_depth, bp, 0, 1) +
                 ratio_block(g.where, (S)cfg.disc_hw_prior_mean, (S)cfg.disc_hw_prior_stdev,
                             g.z_where, bp, 0, 2) +
                 ratio_block(g.where, (S)cfg.disc_xy_prior_mean, (S)cfg.disc_xy_prior_stdev,
                             g.z_where, bp, 2, 2) +
                 ratio_block(g.what, (S)cfg.disc_what_prior_mean, (S)cfg.disc_what_prior_stdev,
                             g.z_what, bp, 0, cfg.z_what_dim);
        acc += y * cond;
      }
      out[b] = acc;
    }
    return out;
  }
};

}  // namespace gswm
