#pragma once

#include <array>
#include <cmath>
#include <string>

#include "gswm/core/nn.hpp"

namespace gswm {

// Probabilities are clamped to this range before any log / KL computation.
inline constexpr double kProbEps = 1e-6;

template <class S>
struct GaussianParams {
  Var<S> mean, stdev;  // stdev strictly positive (softplus upstream)
};

template <class S>
struct BernoulliParams {
  Var<S> prob;  // in (0, 1)
};

// Axis-aligned attention window. center_xy is (x, y) in [-1, 1] normalized
// image coordinates (y downward); size_hw is (h, w) as a fraction of the
// image extent, in (0, 1].
struct GlimpseTransform {
  std::array<double, 2> center_xy{0.0, 0.0};
  std::array<double, 2> size_hw{1.0, 1.0};
};

namespace detail {

template <class S>
Tensor<S> linspace_axis(int64_t n, Shape sh) {
  Tensor<S> t(std::move(sh));
  for (int64_t i = 0; i < n; ++i) t[i] = n == 1 ? S(0) : S(-1) + S(2) * (S)i / (S)(n - 1);
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spatial transformer

// Extract a glimpse from each image. image: [N, C, H, W]; center_xy: [N, 2]
// as (x, y); size_hw: [N, 2] as (h, w) fractions. Samples outside the image
// read as zero; differentiable w.r.t. image, center and size.
template <class S>
Var<S> st_extract(const Var<S>& image, const Var<S>& center_xy, const Var<S>& size_hw,
                  int64_t out_h, int64_t out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("st_extract: non-positive output size");
  for (int64_t i = 0; i < size_hw.numel(); ++i)
    if (size_hw.val()[i] <= S(0)) throw std::invalid_argument("st_extract: non-positive window size");
  int64_t N = image.shape()[0];
  Var<S> cx = reshape(slice(center_xy, 1, 0, 1), {N, 1, 1});
  Var<S> cy = reshape(slice(center_xy, 1, 1, 1), {N, 1, 1});
  Var<S> sh = reshape(slice(size_hw, 1, 0, 1), {N, 1, 1});
  Var<S> sw = reshape(slice(size_hw, 1, 1, 1), {N, 1, 1});
  Var<S> ux = Var<S>::constant(detail::linspace_axis<S>(out_w, {1, 1, out_w}));
  Var<S> uy = Var<S>::constant(detail::linspace_axis<S>(out_h, {1, out_h, 1}));
  Var<S> zero_h = Var<S>::constant(Tensor<S>::zeros({1, out_h, 1}));
  Var<S> zero_w = Var<S>::constant(Tensor<S>::zeros({1, 1, out_w}));
  Var<S> gx = cx + sw * ux + zero_h;  // [N, out_h, out_w]
  Var<S> gy = cy + sh * uy + zero_w;
  Var<S> grid = concat<S>({unsqueeze(gx, -1), unsqueeze(gy, -1)}, -1);
  return grid_sample(image, grid);
}

// Inverse warp: scale the glimpse to size_hw and place it at center_xy on a
// zero canvas of size out_h x out_w.
template <class S>
Var<S> st_place(const Var<S>& glimpse, const Var<S>& center_xy, const Var<S>& size_hw,
                int64_t out_h, int64_t out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("st_place: non-positive output size");
  for (int64_t i = 0; i < size_hw.numel(); ++i)
    if (size_hw.val()[i] <= S(0)) throw std::invalid_argument("st_place: non-positive window size");
  int64_t N = glimpse.shape()[0];
  Var<S> cx = reshape(slice(center_xy, 1, 0, 1), {N, 1, 1});
  Var<S> cy = reshape(slice(center_xy, 1, 1, 1), {N, 1, 1});
  Var<S> sh = reshape(slice(size_hw, 1, 0, 1), {N, 1, 1});
  Var<S> sw = reshape(slice(size_hw, 1, 1, 1), {N, 1, 1});
  Var<S> X = Var<S>::constant(detail::linspace_axis<S>(out_w, {1, 1, out_w}));
  Var<S> Y = Var<S>::constant(detail::linspace_axis<S>(out_h, {1, out_h, 1}));
  Var<S> zero_h = Var<S>::constant(Tensor<S>::zeros({1, out_h, 1}));
  Var<S> zero_w = Var<S>::constant(Tensor<S>::zeros({1, 1, out_w}));
  Var<S> gx = (X - cx) / sw + zero_h;
  Var<S> gy = (Y - cy) / sh + zero_w;
  Var<S> grid = concat<S>({unsqueeze(gx, -1), unsqueeze(gy, -1)}, -1);
  return grid_sample(glimpse, grid);
}

// Single-image conveniences used by tests and tooling.
template <class S>
Tensor<S> st_extract_chw(const Tensor<S>& image_chw, const GlimpseTransform& t, int64_t out_h,
                         int64_t out_w) {
  NoGradGuard ng;
  Shape sh = image_chw.shape;
  Var<S> img = Var<S>::constant(image_chw.reshaped({1, sh[0], sh[1], sh[2]}));
  Var<S> c = Var<S>::constant(Tensor<S>({1, 2}, {(S)t.center_xy[0], (S)t.center_xy[1]}));
  Var<S> s = Var<S>::constant(Tensor<S>({1, 2}, {(S)t.size_hw[0], (S)t.size_hw[1]}));
  return st_extract(img, c, s, out_h, out_w).val().reshaped({sh[0], out_h, out_w});
}

template <class S>
Tensor<S> st_place_chw(const Tensor<S>& glimpse_chw, const GlimpseTransform& t, int64_t out_h,
                       int64_t out_w) {
  NoGradGuard ng;
  Shape sh = glimpse_chw.shape;
  Var<S> g = Var<S>::constant(glimpse_chw.reshaped({1, sh[0], sh[1], sh[2]}));
  Var<S> c = Var<S>::constant(Tensor<S>({1, 2}, {(S)t.center_xy[0], (S)t.center_xy[1]}));
  Var<S> s = Var<S>::constant(Tensor<S>({1, 2}, {(S)t.size_hw[0], (S)t.size_hw[1]}));
  return st_place(g, c, s, out_h, out_w).val().reshaped({sh[0], out_h, out_w});
}

// ---------------------------------------------------------------------------
// Reparameterized sampling

template <class S>
Var<S> sample_gaussian(const GaussianParams<S>& p, Rng& rng) {
  Var<S> eps = Var<S>::constant(rng.randn<S>(p.mean.shape()));
  return p.mean + p.stdev * eps;
}

// Binary-concrete (Gumbel-Softmax for two classes) sample in (0, 1).
template <class S>
Var<S> sample_relaxed_bernoulli(const BernoulliParams<S>& p, S tau, Rng& rng) {
  if (!(tau > S(0))) throw std::invalid_argument("sample_relaxed_bernoulli: tau must be positive");
  Var<S> pc = clamp(p.prob, (S)kProbEps, S(1) - (S)kProbEps);
  Tensor<S> noise(p.prob.shape());
  for (auto& v : noise.data) v = (S)rng.logistic();
  Var<S> logits = vlog(pc) - vlog(S(1) - pc);
  return vsigmoid((logits + Var<S>::constant(std::move(noise))) * (S(1) / tau));
}

// ---------------------------------------------------------------------------
// KL divergences (closed form)

template <class S>
Var<S> kl_gaussian_map(const GaussianParams<S>& q, const GaussianParams<S>& p) {
  if (q.mean.shape() != p.mean.shape() || q.stdev.shape() != p.stdev.shape())
    throw std::invalid_argument("kl_gaussian: shape mismatch");
  Var<S> vr = square(q.stdev / p.stdev);
  Var<S> dm = (q.mean - p.mean) / p.stdev;
  return S(0.5) * (vr + square(dm) - S(1)) - vlog(q.stdev / p.stdev);
}

template <class S>
Var<S> kl_gaussian(const GaussianParams<S>& q, const GaussianParams<S>& p) {
  return sum(kl_gaussian_map(q, p));
}

template <class S>
Var<S> kl_bernoulli_map(const BernoulliParams<S>& q, const BernoulliParams<S>& p) {
  if (q.prob.shape() != p.prob.shape()) throw std::invalid_argument("kl_bernoulli: shape mismatch");
  Var<S> qc = clamp(q.prob, (S)kProbEps, S(1) - (S)kProbEps);
  Var<S> pc = clamp(p.prob, (S)kProbEps, S(1) - (S)kProbEps);
  return qc * (vlog(qc) - vlog(pc)) + (S(1) - qc) * (vlog(S(1) - qc) - vlog(S(1) - pc));
}

template <class S>
Var<S> kl_bernoulli(const BernoulliParams<S>& q, const BernoulliParams<S>& p) {
  return sum(kl_bernoulli_map(q, p));
}

// ---------------------------------------------------------------------------
// Convolutional / recurrent block constructors

template <class S>
struct Block {
  std::vector<std::function<Var<S>(const Var<S>&)>> stages;

  Var<S> operator()(Var<S> x) const {
    for (auto& f : stages) x = f(x);
    return x;
  }
};

struct BlockSpec {
  int64_t in_channels = 3;
  int64_t in_hw = 64;    // encoder input resolution (square)
  int64_t out_hw = 64;   // decoder output resolution
  int64_t out_dim = 128;  // encoder feature dim / decoder output channels
  int64_t in_dim = 128;  // decoder input dim
  int64_t grid_hw = 4;   // discovery grid size
  double width = 1.0;    // channel scale for reduced-size configs
};

namespace detail {

inline int64_t scaled_ch(int64_t base, double width) {
  int64_t c = (int64_t)std::llround((double)base * width);
  c = std::max<int64_t>(8, (c + 7) / 8 * 8);
  return c;
}

inline int64_t gn_groups(int64_t ch) {
  int64_t g = std::max<int64_t>(1, ch / 16);
  while (ch % g != 0) --g;
  return g;
}

template <class S>
void push_conv_gn_celu(Block<S>& blk, ParamStore<S>& ps, const std::string& name, int64_t in_ch,
                       int64_t out_ch, int64_t k, int64_t stride, Rng& rng) {
  Conv2d<S> conv(ps, name + ".conv", in_ch, out_ch, k, stride, k / 2, rng);
  GroupNorm<S> gn(ps, name + ".gn", out_ch, gn_groups(out_ch));
  blk.stages.push_back([conv, gn](const Var<S>& x) { return celu(gn(conv(x))); });
}

// sub-pixel convolution: conv to out_ch*4 then depth-to-space by 2
template <class S>
void push_subconv(Block<S>& blk, ParamStore<S>& ps, const std::string& name, int64_t in_ch,
                  int64_t out_ch, Rng& rng, bool gn_celu) {
  Conv2d<S> conv(ps, name + ".conv", in_ch, out_ch * 4, 3, 1, 1, rng);
  if (gn_celu) {
    GroupNorm<S> gn(ps, name + ".gn", out_ch, gn_groups(out_ch));
    blk.stages.push_back(
        [conv, gn](const Var<S>& x) { return celu(gn(pixel_shuffle(conv(x), 2))); });
  } else {
    blk.stages.push_back([conv](const Var<S>& x) { return pixel_shuffle(conv(x), 2); });
  }
}

template <class S>
void push_residual(Block<S>& blk, ParamStore<S>& ps, const std::string& name, int64_t ch,
                   Rng& rng) {
  Conv2d<S> c1(ps, name + ".conv1", ch, ch, 3, 1, 1, rng);
  GroupNorm<S> g1(ps, name + ".gn1", ch, gn_groups(ch));
  Conv2d<S> c2(ps, name + ".conv2", ch, ch, 3, 1, 1, rng);
  GroupNorm<S> g2(ps, name + ".gn2", ch, gn_groups(ch));
  blk.stages.push_back(
      [c1, g1, c2, g2](const Var<S>& x) { return celu(x + g2(c2(celu(g1(c1(x)))))); });
}

}  // namespace detail

// Named block constructors. `kind` selects the layer schedule:
//   bg_encoder        frame -> feature vector (7x7 stem, 4 stride-2 convs)
//   bg_decoder        context latent -> full-size image through sub-pixel convs
//   aoe_encoder       16x16 background glimpse -> feature vector
//   proposal_encoder  16x16 frame glimpse -> feature vector
//   glimpse_decoder   appearance latent -> (rgb + mask) glimpse
//   discovery_encoder 6-channel frame stack -> grid feature map (residual stack)
template <class S>
Block<S> build_block(ParamStore<S>& ps, const std::string& prefix, const std::string& kind,
                     const BlockSpec& spec, Rng& rng) {
  using detail::scaled_ch;
  Block<S> blk;
  const double w = spec.width;

  if (kind == "bg_encoder") {
    int64_t c1 = scaled_ch(64, w), c2 = scaled_ch(128, w), c3 = scaled_ch(256, w),
            c4 = scaled_ch(512, w);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l0", spec.in_channels, c1, 7, 2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l1", c1, c2, 3, 2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l2", c2, c3, 3, 2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l3", c3, c4, 3, 2, rng);
    int64_t hw = spec.in_hw / 16;
    Linear<S> fc(ps, prefix + ".fc", c4 * hw * hw, spec.out_dim, rng);
    blk.stages.push_back([fc](const Var<S>& x) { return fc(flatten2(x)); });
    return blk;
  }
  if (kind == "bg_decoder") {
    int64_t h0 = spec.out_hw / 16;
    if (h0 < 1 || spec.in_dim % (h0 * h0) != 0)
      throw std::invalid_argument("bg_decoder: in_dim not divisible by seed area");
    int64_t c0 = spec.in_dim / (h0 * h0);
    int64_t c1 = scaled_ch(64, w), c2 = scaled_ch(32, w), c3 = scaled_ch(16, w);
    blk.stages.push_back([c0, h0](const Var<S>& x) { return reshape(x, {x.shape()[0], c0, h0, h0}); });
    detail::push_subconv(blk, ps, prefix + ".u0", c0, c1, rng, true);
    detail::push_subconv(blk, ps, prefix + ".u1", c1, c2, rng, true);
    detail::push_subconv(blk, ps, prefix + ".u2", c2, c3, rng, true);
    detail::push_subconv(blk, ps, prefix + ".u3", c3, 3, rng, false);
    blk.stages.push_back([](const Var<S>& x) { return vsigmoid(x); });
    return blk;
  }
  if (kind == "aoe_encoder" || kind == "proposal_encoder") {
    int64_t c1 = scaled_ch(16, w), c2 = scaled_ch(32, w), c3 = scaled_ch(64, w),
            c4 = scaled_ch(128, w);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l0", spec.in_channels, c1, 3, 2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l1", c1, c2, 3, 2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l2", c2, c3, 3, 2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l3", c3, c4, 3, 2, rng);
    int64_t hw = spec.in_hw / 16;
    Linear<S> fc(ps, prefix + ".fc", c4 * hw * hw, spec.out_dim, rng);
    blk.stages.push_back([fc](const Var<S>& x) { return fc(flatten2(x)); });
    return blk;
  }
  if (kind == "glimpse_decoder") {
    // in_dim at 1x1, four stride-2 sub-pixel convs up to out_hw=16, 3+1 channels
    int64_t c0 = spec.in_dim;
    int64_t c1 = scaled_ch(c0 / 2, 1.0), c2 = scaled_ch(c0 / 4, 1.0), c3 = scaled_ch(c0 / 8, 1.0);
    blk.stages.push_back([c0](const Var<S>& x) { return reshape(x, {x.shape()[0], c0, 1, 1}); });
    detail::push_subconv(blk, ps, prefix + ".u0", c0, c1, rng, true);
    detail::push_subconv(blk, ps, prefix + ".u1", c1, c2, rng, true);
    detail::push_subconv(blk, ps, prefix + ".u2", c2, c3, rng, true);
    detail::push_subconv(blk, ps, prefix + ".u3", c3, 4, rng, false);
    blk.stages.push_back([](const Var<S>& x) { return vsigmoid(x); });
    return blk;
  }
  if (kind == "discovery_encoder") {
    int64_t c1 = scaled_ch(64, w), c2 = scaled_ch(128, w), c3 = scaled_ch(256, w);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l0", spec.in_channels, c1, 3, 2, rng);
    detail::push_residual(blk, ps, prefix + ".r0", c1, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l1", c1, c2, 3, 2, rng);
    detail::push_residual(blk, ps, prefix + ".r1", c2, rng);
    detail::push_conv_gn_celu(blk, ps, prefix + ".l2", c2, c3, 3, 2, rng);
    detail::push_residual(blk, ps, prefix + ".r2", c3, rng);
    int64_t eighth = spec.in_hw / 8;
    int64_t stride = eighth / spec.grid_hw;
    if (stride != 1 && stride != 2)
      throw std::invalid_argument("discovery_encoder: grid size incompatible with input size");
    Conv2d<S> head(ps, prefix + ".head", c3, spec.out_dim, 3, stride, 1, rng);
    blk.stages.push_back([head](const Var<S>& x) { return head(x); });
    return blk;
  }
  throw std::invalid_argument("build_block: unknown block kind '" + kind + "'");
}

// Zero-pad the last dimension of [N, D] features up to `to_dim`.
template <class S>
Var<S> pad_features(const Var<S>& x, int64_t to_dim) {
  int64_t d = x.shape().back();
  if (d == to_dim) return x;
  if (d > to_dim) throw std::invalid_argument("pad_features: input wider than target");
  Shape zsh = x.shape();
  zsh.back() = to_dim - d;
  return concat<S>({x, Var<S>::constant(Tensor<S>::zeros(zsh))}, -1);
}

}  // namespace gswm
