#pragma once

#include <algorithm>
#include <cmath>

#include "gswm/data/episode.hpp"

namespace gswm {

// Frame buffer helpers. All drawing is painter-style: later calls paint over
// earlier ones. Coordinates are arena units in [0,1]^2 unless stated.

inline void fill_frame(uint8_t* rgb, int64_t H, int64_t W, uint8_t r, uint8_t g, uint8_t b) {
  std::fill_n(rgb, H * W, r);
  std::fill_n(rgb + H * W, H * W, g);
  std::fill_n(rgb + 2 * H * W, H * W, b);
}

// Anti-aliased filled disk; coverage ramps linearly over one pixel at the rim.
inline void draw_disk(uint8_t* rgb, int64_t H, int64_t W, double cx, double cy, double radius,
                      const std::array<uint8_t, 3>& color) {
  double px = cx * (double)W - 0.5;
  double py = cy * (double)H - 0.5;
  double pr = radius * (double)W;
  int64_t x0 = (int64_t)std::floor(px - pr - 1), x1 = (int64_t)std::ceil(px + pr + 1);
  int64_t y0 = (int64_t)std::floor(py - pr - 1), y1 = (int64_t)std::ceil(py + pr + 1);
  x0 = std::max<int64_t>(0, x0);
  y0 = std::max<int64_t>(0, y0);
  x1 = std::min<int64_t>(W - 1, x1);
  y1 = std::min<int64_t>(H - 1, y1);
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x) {
      double d = std::sqrt(((double)x - px) * ((double)x - px) + ((double)y - py) * ((double)y - py));
      double a = std::clamp(pr - d + 0.5, 0.0, 1.0);
      if (a <= 0.0) continue;
      for (int64_t c = 0; c < 3; ++c) {
        uint8_t& dst = rgb[c * H * W + y * W + x];
        dst = (uint8_t)std::lround((1.0 - a) * (double)dst + a * (double)color[c]);
      }
    }
}

// Axis-aligned filled square given center in pixel coordinates and side in pixels.
inline void draw_square_px(uint8_t* rgb, int64_t H, int64_t W, double px, double py, double side,
                           const std::array<uint8_t, 3>& color) {
  double h = side * 0.5;
  int64_t x0 = std::max<int64_t>(0, (int64_t)std::ceil(px - h - 0.5));
  int64_t x1 = std::min<int64_t>(W - 1, (int64_t)std::floor(px + h - 0.5));
  int64_t y0 = std::max<int64_t>(0, (int64_t)std::ceil(py - h - 0.5));
  int64_t y1 = std::min<int64_t>(H - 1, (int64_t)std::floor(py + h - 0.5));
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x)
      for (int64_t c = 0; c < 3; ++c) rgb[c * H * W + y * W + x] = color[c];
}

inline void fill_rect_px(uint8_t* rgb, int64_t H, int64_t W, int64_t x0, int64_t y0, int64_t w,
                         int64_t h, const std::array<uint8_t, 3>& color) {
  for (int64_t y = y0; y < y0 + h; ++y)
    for (int64_t x = x0; x < x0 + w; ++x)
      for (int64_t c = 0; c < 3; ++c) rgb[c * H * W + y * W + x] = color[c];
}

}  // namespace gswm
