#pragma once

#include <stdexcept>

#include "gswm/core/rng.hpp"
#include "gswm/sim/raster.hpp"

namespace gswm {

enum class BallMode { Interaction, Occlusion, TwoLayer, TwoLayerDense };

inline const char* ball_mode_name(BallMode m) {
  switch (m) {
    case BallMode::Interaction: return "interaction";
    case BallMode::Occlusion: return "occlusion";
    case BallMode::TwoLayer: return "two_layer";
    case BallMode::TwoLayerDense: return "two_layer_dense";
  }
  return "?";
}

inline BallMode ball_mode_from_name(const std::string& s) {
  if (s == "interaction") return BallMode::Interaction;
  if (s == "occlusion") return BallMode::Occlusion;
  if (s == "two_layer") return BallMode::TwoLayer;
  if (s == "two_layer_dense") return BallMode::TwoLayerDense;
  throw std::invalid_argument("unknown ball mode: " + s);
}

struct GenerationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BallWorld {
  std::vector<std::array<double, 2>> positions;   // arena units, (x, y)
  std::vector<std::array<double, 2>> velocities;  // arena units per step
  double radius = 0.08;
  std::vector<int64_t> colors;
  std::vector<int64_t> layer;  // 0 = front, 1 = back; also depth rank for occlusion
  BallMode mode = BallMode::Interaction;

  int64_t count() const { return (int64_t)positions.size(); }
};

namespace detail {

// Equal-mass elastic collision: exchange the normal velocity components of an
// approaching pair. Conserves kinetic energy and momentum exactly.
inline void resolve_pair(BallWorld& w, int64_t i, int64_t j) {
  double dx = w.positions[i][0] - w.positions[j][0];
  double dy = w.positions[i][1] - w.positions[j][1];
  double dist = std::sqrt(dx * dx + dy * dy);
  if (dist >= 2 * w.radius || dist == 0.0) return;
  double nx = dx / dist, ny = dy / dist;
  double vi = w.velocities[i][0] * nx + w.velocities[i][1] * ny;
  double vj = w.velocities[j][0] * nx + w.velocities[j][1] * ny;
  if (vi - vj >= 0.0) return;  // separating
  double dv = vj - vi;
  w.velocities[i][0] += dv * nx;
  w.velocities[i][1] += dv * ny;
  w.velocities[j][0] -= dv * nx;
  w.velocities[j][1] -= dv * ny;
  // positional separation so same-layer balls do not interpenetrate
  double push = (2 * w.radius - dist) * 0.5;
  w.positions[i][0] += push * nx;
  w.positions[i][1] += push * ny;
  w.positions[j][0] -= push * nx;
  w.positions[j][1] -= push * ny;
}

inline void reflect_walls(BallWorld& w, int64_t i) {
  double r = w.radius;
  for (int64_t a = 0; a < 2; ++a) {
    if (w.positions[i][a] < r) {
      w.positions[i][a] = 2 * r - w.positions[i][a];
      w.velocities[i][a] = -w.velocities[i][a];
    }
    if (w.positions[i][a] > 1 - r) {
      w.positions[i][a] = 2 * (1 - r) - w.positions[i][a];
      w.velocities[i][a] = -w.velocities[i][a];
    }
    w.positions[i][a] = std::clamp(w.positions[i][a], r, 1 - r);
  }
}

}  // namespace detail

inline void ball_world_step(BallWorld& w) {
  bool collide = w.mode != BallMode::Occlusion;
  for (int64_t i = 0; i < w.count(); ++i) {
    w.positions[i][0] += w.velocities[i][0];
    w.positions[i][1] += w.velocities[i][1];
    detail::reflect_walls(w, i);
  }
  if (!collide) return;
  for (int pass = 0; pass < 3; ++pass) {
    for (int64_t i = 0; i < w.count(); ++i)
      for (int64_t j = i + 1; j < w.count(); ++j) {
        if (w.layer[i] != w.layer[j]) continue;  // cross-layer balls pass through
        detail::resolve_pair(w, i, j);
      }
    for (int64_t i = 0; i < w.count(); ++i) detail::reflect_walls(w, i);
  }
  // position-only sweeps until same-layer overlaps are gone (dense setting can
  // form chains that one pass does not separate)
  for (int pass = 0; pass < 20; ++pass) {
    bool any = false;
    for (int64_t i = 0; i < w.count(); ++i)
      for (int64_t j = i + 1; j < w.count(); ++j) {
        if (w.layer[i] != w.layer[j]) continue;
        double dx = w.positions[i][0] - w.positions[j][0];
        double dy = w.positions[i][1] - w.positions[j][1];
        double dist = std::sqrt(dx * dx + dy * dy);
        if (dist >= 2 * w.radius || dist == 0.0) continue;
        any = true;
        double push = (2 * w.radius - dist) * 0.5;
        w.positions[i][0] += push * dx / dist;
        w.positions[i][1] += push * dy / dist;
        w.positions[j][0] -= push * dx / dist;
        w.positions[j][1] -= push * dy / dist;
      }
    for (int64_t i = 0; i < w.count(); ++i) {
      double r = w.radius;
      w.positions[i][0] = std::clamp(w.positions[i][0], r, 1 - r);
      w.positions[i][1] = std::clamp(w.positions[i][1], r, 1 - r);
    }
    if (!any) break;
  }
}

inline BallWorld init_ball_world(BallMode mode, Rng& rng) {
  BallWorld w;
  w.mode = mode;
  double r = w.radius;
  int64_t n = 0;
  switch (mode) {
    case BallMode::Interaction:
    case BallMode::Occlusion: n = 3; break;
    case BallMode::TwoLayer: n = 6; break;
    case BallMode::TwoLayerDense: n = 16; break;
  }
  w.positions.resize(n);
  w.velocities.resize(n);
  w.colors.resize(n);
  w.layer.assign(n, 0);

  if (mode == BallMode::Occlusion) {
    // distinct colors from the 5-color set; per-episode random depth order
    std::vector<int64_t> ids = {0, 1, 2, 3, 4};
    for (int64_t i = 0; i < n; ++i) {
      int64_t pick = rng.uniform_int((int64_t)ids.size());
      w.colors[i] = ids[pick];
      ids.erase(ids.begin() + pick);
    }
    std::vector<int64_t> order = {0, 1, 2};
    for (int64_t i = 2; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    for (int64_t i = 0; i < n; ++i) w.layer[i] = order[i];  // painter rank, higher = front
  } else if (mode == BallMode::Interaction) {
    for (int64_t i = 0; i < n; ++i) w.colors[i] = rng.uniform_int(5);
  } else {
    // red front half, blue back half
    for (int64_t i = 0; i < n; ++i) {
      bool front = i < n / 2;
      w.colors[i] = front ? 1 : 0;
      w.layer[i] = front ? 0 : 1;
    }
  }

  bool avoid_overlap = mode != BallMode::Occlusion;
  for (int64_t i = 0; i < n; ++i) {
    int64_t attempts = 0;
    while (true) {
      if (++attempts > 10000)
        throw GenerationFailed("ball placement failed after bounded retries; reseed");
      w.positions[i][0] = rng.uniform(r, 1 - r);
      w.positions[i][1] = rng.uniform(r, 1 - r);
      if (!avoid_overlap) break;
      bool ok = true;
      for (int64_t j = 0; j < i; ++j) {
        if (w.layer[i] != w.layer[j]) continue;
        double dx = w.positions[i][0] - w.positions[j][0];
        double dy = w.positions[i][1] - w.positions[j][1];
        if (dx * dx + dy * dy < 4 * r * r * 1.1) ok = false;
      }
      if (ok) break;
    }
    for (int64_t a = 0; a < 2; ++a) {
      double speed = rng.uniform(0.01, 0.03);
      w.velocities[i][a] = rng.coin() ? speed : -speed;
    }
  }
  return w;
}

// Painter order: back layer first, then front; within the occlusion setting
// paint by per-episode depth rank.
inline std::vector<int64_t> ball_paint_order(const BallWorld& w) {
  std::vector<int64_t> order(w.count());
  for (int64_t i = 0; i < w.count(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (w.mode == BallMode::Occlusion) return w.layer[a] < w.layer[b];
    return w.layer[a] > w.layer[b];  // layer 1 (back) painted before layer 0 (front)
  });
  return order;
}

inline void render_ball_world(const BallWorld& w, uint8_t* rgb, int64_t H, int64_t W) {
  fill_frame(rgb, H, W, 0, 0, 0);
  for (int64_t i : ball_paint_order(w))
    draw_disk(rgb, H, W, w.positions[i][0], w.positions[i][1], w.radius, kPalette[(size_t)w.colors[i]]);
}

inline Episode simulate_balls(BallMode mode, int64_t n_steps, Rng& rng, int64_t hw = 64) {
  if (n_steps < 1) throw std::invalid_argument("simulate_balls: n_steps must be >= 1");
  BallWorld w = init_ball_world(mode, rng);
  Episode ep;
  ep.setting = ball_mode_name(mode);
  ep.frames = Tensor<uint8_t>(Shape{n_steps, 3, hw, hw});
  ep.annotations.resize((size_t)n_steps);
  for (int64_t t = 0; t < n_steps; ++t) {
    if (t > 0) ball_world_step(w);
    render_ball_world(w, ep.frames.ptr() + t * 3 * hw * hw, hw, hw);
    for (int64_t i = 0; i < w.count(); ++i) {
      ObjectAnnotation a;
      a.id = i;
      a.center = w.positions[i];
      a.bbox_hw = {2 * w.radius, 2 * w.radius};
      a.color = w.colors[i];
      a.layer = w.layer[i];
      ep.annotations[(size_t)t].push_back(a);
    }
  }
  return ep;
}

// Single ball descending the vertical centerline, turning toward one of the
// two bottom corners at frame 6.
inline Episode simulate_single_ball(Rng& rng, int64_t hw = 64) {
  const int64_t T = 9;
  const double y0 = 0.12, vy = 0.08, vx = 0.08, radius = 0.08;
  bool left = rng.coin();
  Episode ep;
  ep.setting = "single_ball";
  ep.tag = left ? "left" : "right";
  ep.frames = Tensor<uint8_t>(Shape{T, 3, hw, hw});
  ep.annotations.resize((size_t)T);
  for (int64_t t = 0; t < T; ++t) {
    int64_t frame = t + 1;  // 1-based in the protocol description
    double y = y0 + (double)t * vy;
    double x = 0.5;
    if (frame > 5) x = 0.5 + (left ? -1.0 : 1.0) * vx * (double)(frame - 5);
    uint8_t* rgb = ep.frames.ptr() + t * 3 * hw * hw;
    fill_frame(rgb, hw, hw, 0, 0, 0);
    draw_disk(rgb, hw, hw, x, y, radius, kPalette[1]);
    ObjectAnnotation a;
    a.id = 0;
    a.center = {x, y};
    a.bbox_hw = {2 * radius, 2 * radius};
    a.color = 1;
    a.layer = 0;
    ep.annotations[(size_t)t].push_back(a);
  }
  return ep;
}

}  // namespace gswm
