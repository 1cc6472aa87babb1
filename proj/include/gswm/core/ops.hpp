#pragma once

#include <Eigen/Core>

#include "gswm/core/graph.hpp"

namespace gswm {

namespace detail {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using EMap = Eigen::Map<EMat<S>>;
template <class S>
using ECMap = Eigen::Map<const EMat<S>>;

template <class S>
void im2col(const S* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t Ho, int64_t Wo, S* col) {
  // col layout: [C*kh*kw, Ho*Wo]
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        S* out_row = col + ((c * kh + i) * kw + j) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          int64_t iy = oy * stride + i - pad;
          if (iy < 0 || iy >= H) {
            std::fill_n(out_row + oy * Wo, Wo, S(0));
            continue;
          }
          const S* in_row = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            int64_t ix = ox * stride + j - pad;
            out_row[oy * Wo + ox] = (ix < 0 || ix >= W) ? S(0) : in_row[ix];
          }
        }
      }
}

template <class S>
void col2im(const S* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t Ho, int64_t Wo, S* x) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const S* in_row = col + ((c * kh + i) * kw + j) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          int64_t iy = oy * stride + i - pad;
          if (iy < 0 || iy >= H) continue;
          S* out_row = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            int64_t ix = ox * stride + j - pad;
            if (ix >= 0 && ix < W) out_row[ix] += in_row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace detail

// y = x @ W^T + b;  x: [N, I], W: [O, I], b: [O] (optional, pass undefined Var)
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& W, const Var<S>& b) {
  const Tensor<S>& xv = x.val();
  const Tensor<S>& wv = W.val();
  if (xv.dim() != 2 || wv.dim() != 2 || xv.shape[1] != wv.shape[1])
    throw std::invalid_argument("linear: bad shapes " + shape_str(xv.shape) + " W " + shape_str(wv.shape));
  int64_t N = xv.shape[0], I = xv.shape[1], O = wv.shape[0];
  Tensor<S> y(Shape{N, O});
  {
    detail::ECMap<S> xm(xv.ptr(), N, I), wm(wv.ptr(), O, I);
    detail::EMap<S> ym(y.ptr(), N, O);
    ym.noalias() = xm * wm.transpose();
    if (b.defined()) {
      detail::ECMap<S> bm(b.val().ptr(), 1, O);
      ym.rowwise() += bm.row(0);
    }
  }
  std::vector<Var<S>> parents = {x, W};
  if (b.defined()) parents.push_back(b);
  auto n = detail::fresh<S>(std::move(y), parents);
  if (n->requires_grad) {
    auto px = x.node(), pw = W.node();
    auto pb = b.defined() ? b.node() : nullptr;
    bool nx = x.requires_grad(), nw = W.requires_grad();
    bool nb = b.defined() && b.requires_grad();
    Node<S>* self = n.get();
    n->backward = [self, px, pw, pb, nx, nw, nb, N, I, O]() {
      detail::ECMap<S> g(self->grad.ptr(), N, O);
      if (nx) {
        detail::ECMap<S> wm(pw->value.ptr(), O, I);
        detail::EMap<S> gx(px->grad_ref().ptr(), N, I);
        gx.noalias() += g * wm;
      }
      if (nw) {
        detail::ECMap<S> xm(px->value.ptr(), N, I);
        detail::EMap<S> gw(pw->grad_ref().ptr(), O, I);
        gw.noalias() += g.transpose() * xm;
      }
      if (nb) {
        detail::EMap<S> gb(pb->grad_ref().ptr(), 1, O);
        gb.row(0) += g.colwise().sum();
      }
    };
  }
  return Var<S>(std::move(n));
}

// x: [B, C, H, W], w: [O, C, kh, kw], b: [O] optional
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int64_t stride, int64_t pad) {
  const Tensor<S>& xv = x.val();
  const Tensor<S>& wv = w.val();
  if (xv.dim() != 4 || wv.dim() != 4 || xv.shape[1] != wv.shape[1])
    throw std::invalid_argument("conv2d: bad shapes " + shape_str(xv.shape) + " w " + shape_str(wv.shape));
  int64_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  int64_t O = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
  int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  int64_t K = C * kh * kw, P = Ho * Wo;

  Tensor<S> y(Shape{B, O, Ho, Wo});
  std::vector<S> col((size_t)(K * P));
  for (int64_t n = 0; n < B; ++n) {
    detail::im2col(xv.ptr() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
    detail::ECMap<S> wm(wv.ptr(), O, K), cm(col.data(), K, P);
    detail::EMap<S> ym(y.ptr() + n * O * P, O, P);
    ym.noalias() = wm * cm;
    if (b.defined())
      for (int64_t o = 0; o < O; ++o) ym.row(o).array() += b.val()[o];
  }
  std::vector<Var<S>> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  auto n = detail::fresh<S>(std::move(y), parents);
  if (n->requires_grad) {
    auto px = x.node(), pw = w.node();
    auto pb = b.defined() ? b.node() : nullptr;
    bool nx = x.requires_grad(), nw = w.requires_grad();
    bool nb = b.defined() && b.requires_grad();
    Node<S>* self = n.get();
    n->backward = [self, px, pw, pb, nx, nw, nb, B, C, H, W, O, kh, kw, stride, pad, Ho, Wo]() {
      int64_t K = C * kh * kw, P = Ho * Wo;
      std::vector<S> col((size_t)(K * P)), gcol((size_t)(K * P));
      for (int64_t n2 = 0; n2 < B; ++n2) {
        detail::ECMap<S> g(self->grad.ptr() + n2 * O * P, O, P);
        if (nw) {
          detail::im2col(px->value.ptr() + n2 * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
                         col.data());
          detail::ECMap<S> cm(col.data(), K, P);
          detail::EMap<S> gw(pw->grad_ref().ptr(), O, K);
          gw.noalias() += g * cm.transpose();
        }
        if (nx) {
          detail::ECMap<S> wm(pw->value.ptr(), O, K);
          detail::EMap<S> gc(gcol.data(), K, P);
          gc.noalias() = wm.transpose() * g;
          detail::col2im(gcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                         px->grad_ref().ptr() + n2 * C * H * W);
        }
        if (nb) {
          Tensor<S>& gb = pb->grad_ref();
          for (int64_t o = 0; o < O; ++o) gb[o] += g.row(o).sum();
        }
      }
    };
  }
  return Var<S>(std::move(n));
}

// [B, C*r*r, H, W] -> [B, C, H*r, W*r]
template <class S>
Var<S> pixel_shuffle(const Var<S>& x, int64_t r) {
  const Tensor<S>& xv = x.val();
  int64_t B = xv.shape[0], Cin = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  if (Cin % (r * r) != 0) throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
  int64_t C = Cin / (r * r);
  Tensor<S> y(Shape{B, C, H * r, W * r});
  auto fwd_index = [=](int64_t b, int64_t c, int64_t i, int64_t j, int64_t h, int64_t w) {
    int64_t ci = (c * r + i) * r + j;
    return ((b * Cin + ci) * H + h) * W + w;
  };
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t i = 0; i < r; ++i)
          for (int64_t w = 0; w < W; ++w)
            for (int64_t j = 0; j < r; ++j)
              y.ptr()[((b * C + c) * H * r + h * r + i) * W * r + w * r + j] =
                  xv.ptr()[fwd_index(b, c, i, j, h, w)];
  auto n = detail::fresh<S>(std::move(y), {x});
  if (n->requires_grad) {
    auto px = x.node();
    Node<S>* self = n.get();
    n->backward = [self, px, B, C, Cin, H, W, r]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& gx = px->grad_ref();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
          for (int64_t h = 0; h < H; ++h)
            for (int64_t i = 0; i < r; ++i)
              for (int64_t w = 0; w < W; ++w)
                for (int64_t j = 0; j < r; ++j) {
                  int64_t ci = (c * r + i) * r + j;
                  gx.ptr()[((b * Cin + ci) * H + h) * W + w] +=
                      g.ptr()[((b * C + c) * H * r + h * r + i) * W * r + w * r + j];
                }
    };
  }
  return Var<S>(std::move(n));
}

template <class S>
Var<S> avg_pool2d(const Var<S>& x, int64_t k) {
  const Tensor<S>& xv = x.val();
  int64_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  int64_t Ho = H / k, Wo = W / k;
  Tensor<S> y(Shape{B, C, Ho, Wo});
  S inv = S(1) / S(k * k);
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        S acc = 0;
        for (int64_t i = 0; i < k; ++i)
          for (int64_t j = 0; j < k; ++j) acc += xv.ptr()[(bc * H + oy * k + i) * W + ox * k + j];
        y.ptr()[(bc * Ho + oy) * Wo + ox] = acc * inv;
      }
  auto n = detail::fresh<S>(std::move(y), {x});
  if (n->requires_grad) {
    auto px = x.node();
    Node<S>* self = n.get();
    n->backward = [self, px, B, C, H, W, Ho, Wo, k, inv]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& gx = px->grad_ref();
      for (int64_t bc = 0; bc < B * C; ++bc)
        for (int64_t oy = 0; oy < Ho; ++oy)
          for (int64_t ox = 0; ox < Wo; ++ox) {
            S gv = g.ptr()[(bc * Ho + oy) * Wo + ox] * inv;
            for (int64_t i = 0; i < k; ++i)
              for (int64_t j = 0; j < k; ++j) gx.ptr()[(bc * H + oy * k + i) * W + ox * k + j] += gv;
          }
    };
  }
  return Var<S>(std::move(n));
}

// GroupNorm over [B, C, H, W] (also accepts [B, C] as H=W=1)
template <class S>
Var<S> group_norm(const Var<S>& x, int64_t groups, const Var<S>& gamma, const Var<S>& beta,
                  S eps = S(1e-5)) {
  const Tensor<S>& xv = x.val();
  int64_t B = xv.shape[0], C = xv.shape[1];
  int64_t HW = xv.numel() / (B * C);
  if (C % groups != 0) throw std::invalid_argument("group_norm: C % groups != 0");
  int64_t cpg = C / groups, gs = cpg * HW;
  Tensor<S> y(xv.shape);
  Tensor<S> mean_(Shape{B, groups}), rstd_(Shape{B, groups});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t g = 0; g < groups; ++g) {
      const S* p = xv.ptr() + (b * C + g * cpg) * HW;
      S m = 0, v = 0;
      for (int64_t i = 0; i < gs; ++i) m += p[i];
      m /= (S)gs;
      for (int64_t i = 0; i < gs; ++i) v += (p[i] - m) * (p[i] - m);
      v /= (S)gs;
      S rs = S(1) / std::sqrt(v + eps);
      mean_.at(b, g) = m;
      rstd_.at(b, g) = rs;
      S* q = y.ptr() + (b * C + g * cpg) * HW;
      for (int64_t c = 0; c < cpg; ++c) {
        S ga = gamma.val()[g * cpg + c], be = beta.val()[g * cpg + c];
        for (int64_t i = 0; i < HW; ++i) q[c * HW + i] = (p[c * HW + i] - m) * rs * ga + be;
      }
    }
  auto n = detail::fresh<S>(std::move(y), {x, gamma, beta});
  if (n->requires_grad) {
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    bool nx = x.requires_grad();
    bool ng = gamma.requires_grad(), nb = beta.requires_grad();
    Node<S>* self = n.get();
    n->backward = [self, px, pg, pb, nx, ng, nb, B, C, HW, groups, cpg, gs, mean_, rstd_]() {
      const Tensor<S>& g = self->grad;
      const Tensor<S>& xv = px->value;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t gi = 0; gi < groups; ++gi) {
          const S* xp = xv.ptr() + (b * C + gi * cpg) * HW;
          const S* gp = g.ptr() + (b * C + gi * cpg) * HW;
          S m = mean_.at(b, gi), rs = rstd_.at(b, gi);
          // accumulate sums for dgamma/dbeta and the two group means used by dx
          S sum_gy_xhat = 0, sum_gy = 0;
          for (int64_t c = 0; c < cpg; ++c) {
            S ga = pg->value[gi * cpg + c];
            S dg = 0, db = 0;
            for (int64_t i = 0; i < HW; ++i) {
              S xhat = (xp[c * HW + i] - m) * rs;
              S gy = gp[c * HW + i];
              dg += gy * xhat;
              db += gy;
              sum_gy_xhat += gy * ga * xhat;
              sum_gy += gy * ga;
            }
            if (ng) pg->grad_ref()[gi * cpg + c] += dg;
            if (nb) pb->grad_ref()[gi * cpg + c] += db;
          }
          if (nx) {
            S* dxp = px->grad_ref().ptr() + (b * C + gi * cpg) * HW;
            S inv_gs = S(1) / (S)gs;
            for (int64_t c = 0; c < cpg; ++c) {
              S ga = pg->value[gi * cpg + c];
              for (int64_t i = 0; i < HW; ++i) {
                S xhat = (xp[c * HW + i] - m) * rs;
                S gy = gp[c * HW + i] * ga;
                dxp[c * HW + i] += rs * (gy - inv_gs * sum_gy - xhat * inv_gs * sum_gy_xhat);
              }
            }
          }
        }
    };
  }
  return Var<S>(std::move(n));
}

// Bilinear sampling with zero padding, align_corners=true.
// input: [N, C, H, W], grid: [N, h, w, 2] with (x, y) in [-1, 1] -> out [N, C, h, w]
template <class S>
Var<S> grid_sample(const Var<S>& input, const Var<S>& grid) {
  const Tensor<S>& xv = input.val();
  const Tensor<S>& gv = grid.val();
  int64_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  int64_t h = gv.shape[1], w = gv.shape[2];
  if (gv.shape[0] != N || gv.shape[3] != 2) throw std::invalid_argument("grid_sample: bad grid shape");
  Tensor<S> y(Shape{N, C, h, w});
  auto sample = [&](int64_t n2, int64_t oy, int64_t ox, S* out, int64_t ostride) {
    S gx = gv.ptr()[((n2 * h + oy) * w + ox) * 2 + 0];
    S gy = gv.ptr()[((n2 * h + oy) * w + ox) * 2 + 1];
    S px = (gx + S(1)) * S(0.5) * (S)(W - 1);
    S py = (gy + S(1)) * S(0.5) * (S)(H - 1);
    int64_t x0 = (int64_t)std::floor(px), y0 = (int64_t)std::floor(py);
    S wx = px - (S)x0, wy = py - (S)y0;
    for (int64_t c = 0; c < C; ++c) {
      const S* plane = xv.ptr() + (n2 * C + c) * H * W;
      auto tap = [&](int64_t yy, int64_t xx) -> S {
        return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? S(0) : plane[yy * W + xx];
      };
      S v00 = tap(y0, x0), v01 = tap(y0, x0 + 1), v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
      out[c * ostride] = (S(1) - wy) * ((S(1) - wx) * v00 + wx * v01) + wy * ((S(1) - wx) * v10 + wx * v11);
    }
  };
  for (int64_t n2 = 0; n2 < N; ++n2)
    for (int64_t oy = 0; oy < h; ++oy)
      for (int64_t ox = 0; ox < w; ++ox)
        sample(n2, oy, ox, y.ptr() + ((n2 * C) * h + oy) * w + ox, h * w);
  auto n = detail::fresh<S>(std::move(y), {input, grid});
  if (n->requires_grad) {
    auto px = input.node(), pgr = grid.node();
    bool nx = input.requires_grad(), ngr = grid.requires_grad();
    Node<S>* self = n.get();
    n->backward = [self, px, pgr, nx, ngr, N, C, H, W, h, w]() {
      const Tensor<S>& g = self->grad;
      const Tensor<S>& xv = px->value;
      const Tensor<S>& gv = pgr->value;
      Tensor<S>* gx = nx ? &px->grad_ref() : nullptr;
      Tensor<S>* gg = ngr ? &pgr->grad_ref() : nullptr;
      for (int64_t n2 = 0; n2 < N; ++n2)
        for (int64_t oy = 0; oy < h; ++oy)
          for (int64_t ox = 0; ox < w; ++ox) {
            S gxn = gv.ptr()[((n2 * h + oy) * w + ox) * 2 + 0];
            S gyn = gv.ptr()[((n2 * h + oy) * w + ox) * 2 + 1];
            S pxf = (gxn + S(1)) * S(0.5) * (S)(W - 1);
            S pyf = (gyn + S(1)) * S(0.5) * (S)(H - 1);
            int64_t x0 = (int64_t)std::floor(pxf), y0 = (int64_t)std::floor(pyf);
            S wx = pxf - (S)x0, wy = pyf - (S)y0;
            S dpx = 0, dpy = 0;
            for (int64_t c = 0; c < C; ++c) {
              const S* plane = xv.ptr() + (n2 * C + c) * H * W;
              S go = g.ptr()[((n2 * C + c) * h + oy) * w + ox];
              auto tap = [&](int64_t yy, int64_t xx) -> S {
                return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? S(0) : plane[yy * W + xx];
              };
              S v00 = tap(y0, x0), v01 = tap(y0, x0 + 1);
              S v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
              if (gg) {
                dpx += go * ((S(1) - wy) * (v01 - v00) + wy * (v11 - v10));
                dpy += go * ((S(1) - wx) * (v10 - v00) + wx * (v11 - v01));
              }
              if (gx) {
                S* gplane = gx->ptr() + (n2 * C + c) * H * W;
                auto acc = [&](int64_t yy, int64_t xx, S coef) {
                  if (yy >= 0 && yy < H && xx >= 0 && xx < W) gplane[yy * W + xx] += go * coef;
                };
                acc(y0, x0, (S(1) - wy) * (S(1) - wx));
                acc(y0, x0 + 1, (S(1) - wy) * wx);
                acc(y0 + 1, x0, wy * (S(1) - wx));
                acc(y0 + 1, x0 + 1, wy * wx);
              }
            }
            if (gg) {
              gg->ptr()[((n2 * h + oy) * w + ox) * 2 + 0] += dpx * S(0.5) * (S)(W - 1);
              gg->ptr()[((n2 * h + oy) * w + ox) * 2 + 1] += dpy * S(0.5) * (S)(H - 1);
            }
          }
    };
  }
  return Var<S>(std::move(n));
}

// Gather rows along dim 1 with per-batch indices.
// x: [B, K, rest...], idx: [B, K'] -> [B, K', rest...]; backward scatter-adds.
template <class S>
Var<S> batched_gather(const Var<S>& x, const Tensor<int64_t>& idx) {
  const Tensor<S>& xv = x.val();
  int64_t B = xv.shape[0], K = xv.shape[1];
  int64_t R = xv.numel() / (B * K);
  int64_t Kp = idx.shape[1];
  Shape osh = xv.shape;
  osh[1] = Kp;
  Tensor<S> y(osh);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t k = 0; k < Kp; ++k) {
      int64_t src = idx.at(b, k);
      if (src < 0 || src >= K) throw std::invalid_argument("batched_gather: index out of range");
      std::copy_n(xv.ptr() + (b * K + src) * R, R, y.ptr() + (b * Kp + k) * R);
    }
  auto n = detail::fresh<S>(std::move(y), {x});
  if (n->requires_grad) {
    auto px = x.node();
    Node<S>* self = n.get();
    Tensor<int64_t> idx_copy = idx;
    n->backward = [self, px, idx_copy, B, K, Kp, R]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& gx = px->grad_ref();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < Kp; ++k) {
          int64_t src = idx_copy.at(b, k);
          const S* sp = g.ptr() + (b * Kp + k) * R;
          S* dp = gx.ptr() + (b * K + src) * R;
          for (int64_t i = 0; i < R; ++i) dp[i] += sp[i];
        }
    };
  }
  return Var<S>(std::move(n));
}

// [B, C, H, W] -> [B, H*W, C]; used to turn a conv feature map into per-cell
// feature rows.
template <class S>
Var<S> nchw_to_cells(const Var<S>& x) {
  const Tensor<S>& xv = x.val();
  int64_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  int64_t P = H * W;
  Tensor<S> y(Shape{B, P, C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t p = 0; p < P; ++p) y.ptr()[(b * P + p) * C + c] = xv.ptr()[(b * C + c) * P + p];
  auto n = detail::fresh<S>(std::move(y), {x});
  if (n->requires_grad) {
    auto px = x.node();
    Node<S>* self = n.get();
    n->backward = [self, px, B, C, P]() {
      const Tensor<S>& g = self->grad;
      Tensor<S>& gx = px->grad_ref();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
          for (int64_t p = 0; p < P; ++p)
            gx.ptr()[(b * C + c) * P + p] += g.ptr()[(b * P + p) * C + c];
    };
  }
  return Var<S>(std::move(n));
}

// Numerically stable softmax over the last dimension (max is detached, which
// keeps the composed gradient exact).
template <class S>
Var<S> softmax_lastdim(const Var<S>& x) {
  const Tensor<S>& xv = x.val();
  int64_t d = xv.shape.back();
  int64_t rows = xv.numel() / d;
  Shape msh = xv.shape;
  msh.back() = 1;
  Tensor<S> m(msh);
  for (int64_t r = 0; r < rows; ++r) {
    S mx = xv.ptr()[r * d];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xv.ptr()[r * d + i]);
    m[r] = mx;
  }
  auto e = vexp(x - Var<S>::constant(std::move(m)));
  return e / sum(e, -1, true);
}

}  // namespace gswm
