#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "gswm/core/tensor.hpp"

namespace gswm {

namespace detail {

inline void png_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back((uint8_t)(x >> 24));
  v.push_back((uint8_t)(x >> 16));
  v.push_back((uint8_t)(x >> 8));
  v.push_back((uint8_t)x);
}

inline void png_chunk(std::ofstream& f, const char* type, const std::vector<uint8_t>& data) {
  std::vector<uint8_t> hdr;
  png_be32(hdr, (uint32_t)data.size());
  f.write((const char*)hdr.data(), 4);
  f.write(type, 4);
  if (!data.empty()) f.write((const char*)data.data(), (std::streamsize)data.size());
  uint32_t crc = (uint32_t)::crc32(0L, (const Bytef*)type, 4);
  if (!data.empty()) crc = (uint32_t)::crc32(crc, data.data(), (uInt)data.size());
  std::vector<uint8_t> tail;
  png_be32(tail, crc);
  f.write((const char*)tail.data(), 4);
}

}  // namespace detail

// Write an 8-bit RGB image ([3][H][W] planes) as a PNG file.
inline void write_png(const std::string& path, const uint8_t* rgb, int64_t H, int64_t W) {
  // interleave with per-row filter byte 0
  std::vector<uint8_t> raw((size_t)(H * (1 + 3 * W)));
  for (int64_t y = 0; y < H; ++y) {
    uint8_t* row = raw.data() + y * (1 + 3 * W);
    row[0] = 0;
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c) row[1 + 3 * x + c] = rgb[c * H * W + y * W + x];
  }
  uLongf bound = compressBound((uLong)raw.size());
  std::vector<uint8_t> compressed((size_t)bound);
  if (compress2(compressed.data(), &bound, raw.data(), (uLong)raw.size(), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  compressed.resize((size_t)bound);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("png: cannot open " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  f.write((const char*)sig, 8);
  std::vector<uint8_t> ihdr;
  detail::png_be32(ihdr, (uint32_t)W);
  detail::png_be32(ihdr, (uint32_t)H);
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::png_chunk(f, "IHDR", ihdr);
  detail::png_chunk(f, "IDAT", compressed);
  detail::png_chunk(f, "IEND", {});
}

// Simple RGB canvas for figure assembly and line plots.
struct Canvas {
  int64_t H = 0, W = 0;
  std::vector<uint8_t> pix;  // [3][H][W]

  Canvas(int64_t h, int64_t w, uint8_t fill = 255) : H(h), W(w), pix((size_t)(3 * h * w), fill) {}

  void set(int64_t x, int64_t y, std::array<uint8_t, 3> c) {
    if (x < 0 || x >= W || y < 0 || y >= H) return;
    for (int64_t k = 0; k < 3; ++k) pix[(size_t)(k * H * W + y * W + x)] = c[(size_t)k];
  }

  // paste a [3][h][w] float image in [0,1]
  template <class S>
  void paste(const Tensor<S>& img, int64_t x0, int64_t y0) {
    int64_t h = img.shape[1], w = img.shape[2];
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        set(x0 + x, y0 + y,
            {(uint8_t)std::clamp((double)img.ptr()[(0 * h + y) * w + x] * 255.0, 0.0, 255.0),
             (uint8_t)std::clamp((double)img.ptr()[(1 * h + y) * w + x] * 255.0, 0.0, 255.0),
             (uint8_t)std::clamp((double)img.ptr()[(2 * h + y) * w + x] * 255.0, 0.0, 255.0)});
  }

  void paste_rgb8(const uint8_t* rgb, int64_t h, int64_t w, int64_t x0, int64_t y0) {
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        set(x0 + x, y0 + y,
            {rgb[0 * h * w + y * w + x], rgb[1 * h * w + y * w + x], rgb[2 * h * w + y * w + x]});
  }

  void line(double x0, double y0, double x1, double y1, std::array<uint8_t, 3> c) {
    int64_t steps = (int64_t)std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
    for (int64_t i = 0; i <= steps; ++i) {
      double t = (double)i / (double)steps;
      set((int64_t)std::lround(x0 + t * (x1 - x0)), (int64_t)std::lround(y0 + t * (y1 - y0)), c);
    }
  }

  void save(const std::string& path) const { write_png(path, pix.data(), H, W); }
};

// Line chart with optional shaded std bands; series are (label, mean, std).
struct Series {
  std::string label;
  std::vector<double> mean, stdev;
  std::array<uint8_t, 3> color{0, 0, 200};
};

inline void plot_curves(const std::string& path, const std::vector<Series>& series,
                        int64_t width = 640, int64_t height = 400) {
  Canvas cv(height, width, 255);
  const int64_t mL = 50, mR = 15, mT = 15, mB = 30;
  double ymin = 1e300, ymax = -1e300;
  size_t n = 0;
  for (auto& s : series) {
    n = std::max(n, s.mean.size());
    for (size_t i = 0; i < s.mean.size(); ++i) {
      double sd = i < s.stdev.size() ? s.stdev[i] : 0;
      ymin = std::min(ymin, s.mean[i] - sd);
      ymax = std::max(ymax, s.mean[i] + sd);
    }
  }
  if (n == 0) {
    cv.save(path);
    return;
  }
  if (ymax <= ymin) ymax = ymin + 1;
  double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto X = [&](double i) { return mL + i / (double)std::max<size_t>(n - 1, 1) * (width - mL - mR); };
  auto Y = [&](double v) { return mT + (ymax - v) / (ymax - ymin) * (height - mT - mB); };
  // axes
  cv.line(mL, mT, mL, height - mB, {0, 0, 0});
  cv.line(mL, height - mB, width - mR, height - mB, {0, 0, 0});
  for (auto& s : series) {
    // shaded band first
    for (size_t i = 0; i < s.mean.size(); ++i) {
      double sd = i < s.stdev.size() ? s.stdev[i] : 0;
      if (sd <= 0) continue;
      std::array<uint8_t, 3> light = {(uint8_t)(255 - (255 - s.color[0]) / 4),
                                      (uint8_t)(255 - (255 - s.color[1]) / 4),
                                      (uint8_t)(255 - (255 - s.color[2]) / 4)};
      cv.line(X((double)i), Y(s.mean[i] - sd), X((double)i), Y(s.mean[i] + sd), light);
    }
    for (size_t i = 0; i + 1 < s.mean.size(); ++i)
      cv.line(X((double)i), Y(s.mean[i]), X((double)(i + 1)), Y(s.mean[i + 1]), s.color);
  }
  cv.save(path);
}

}  // namespace gswm
