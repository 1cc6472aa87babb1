#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gswm/core/tensor.hpp"

namespace gswm {

// Shared color palette. Ball settings draw from the first five entries,
// maze agents from {red, lime, blue, yellow, aqua, fuchsia}.
inline constexpr std::array<std::array<uint8_t, 3>, 7> kPalette = {{
    {0, 0, 255},      // 0 blue
    {255, 0, 0},      // 1 red
    {255, 255, 0},    // 2 yellow
    {255, 0, 255},    // 3 fuchsia / magenta
    {0, 255, 255},    // 4 aqua / cyan
    {0, 255, 0},      // 5 lime
    {255, 255, 255},  // 6 white
}};

struct ObjectAnnotation {
  int64_t id = 0;
  std::array<double, 2> center{0, 0};   // arena units in [0,1]^2, (x, y), y downward
  std::array<double, 2> bbox_hw{0, 0};  // (h, w) in arena units
  int64_t color = 0;
  int64_t layer = 0;
};

struct Episode {
  Tensor<uint8_t> frames;  // [T, 3, H, W]
  std::vector<std::vector<ObjectAnnotation>> annotations;
  uint64_t seed = 0;
  std::string setting;
  std::string tag;  // free-form per-episode note, e.g. turn direction

  int64_t length() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
  int64_t height() const { return frames.shape[2]; }
  int64_t width() const { return frames.shape[3]; }
};

}  // namespace gswm
