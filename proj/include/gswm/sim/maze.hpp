#pragma once

#include <stdexcept>

#include "gswm/core/rng.hpp"
#include "gswm/sim/raster.hpp"

namespace gswm {

// 8x8 cell grid rendered at 8 px/cell (64x64 frame). The carved maze lives in
// the top-left 7x7 sub-grid with rooms at odd coordinates; the remaining
// border row/column stays wall.
struct MazeWorld {
  static constexpr int64_t kGrid = 8;
  static constexpr int64_t kCellPx = 8;
  static constexpr int64_t kAgentPx = 6;
  static constexpr int64_t kSpeedPx = 2;

  std::array<std::array<bool, kGrid>, kGrid> corridor{};  // [row][col], true = open

  struct Agent {
    int64_t row = 0, col = 0;     // current cell
    int64_t dr = 0, dc = 0;       // unit heading
    int64_t color = 0;
    double offset_px = 0;         // pixels advanced from the cell center
  };
  std::vector<Agent> agents;

  bool open(int64_t r, int64_t c) const {
    return r >= 0 && r < kGrid && c >= 0 && c < kGrid && corridor[(size_t)r][(size_t)c];
  }
  int64_t open_neighbors(int64_t r, int64_t c) const {
    return (int64_t)open(r - 1, c) + open(r + 1, c) + open(r, c - 1) + open(r, c + 1);
  }
  std::vector<int64_t> corridor_cells() const {
    std::vector<int64_t> v;
    for (int64_t r = 0; r < kGrid; ++r)
      for (int64_t c = 0; c < kGrid; ++c)
        if (corridor[(size_t)r][(size_t)c]) v.push_back(r * kGrid + c);
    return v;
  }
};

inline constexpr std::array<int64_t, 6> kMazeAgentColors = {1, 5, 0, 2, 4, 3};
inline constexpr std::array<uint8_t, 3> kMazeWallColor = {72, 62, 116};

// Randomized depth-first carving on the 3x3 room lattice, then every dead end
// is opened until no corridor cell has fewer than two open neighbors.
inline MazeWorld generate_maze(Rng& rng) {
  MazeWorld m;
  constexpr int64_t rooms = 3;  // rooms at cells {1,3,5}
  auto room_cell = [](int64_t i) { return 2 * i + 1; };

  std::array<std::array<bool, rooms>, rooms> visited{};
  std::vector<std::array<int64_t, 2>> stack;
  int64_t sr = rng.uniform_int(rooms), sc = rng.uniform_int(rooms);
  visited[(size_t)sr][(size_t)sc] = true;
  m.corridor[(size_t)room_cell(sr)][(size_t)room_cell(sc)] = true;
  stack.push_back({sr, sc});
  const int64_t dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    std::vector<int64_t> options;
    for (int64_t d = 0; d < 4; ++d) {
      int64_t nr = r + dr[d], nc = c + dc[d];
      if (nr >= 0 && nr < rooms && nc >= 0 && nc < rooms && !visited[(size_t)nr][(size_t)nc])
        options.push_back(d);
    }
    if (options.empty()) {
      stack.pop_back();
      continue;
    }
    int64_t d = options[(size_t)rng.uniform_int((int64_t)options.size())];
    int64_t nr = r + dr[d], nc = c + dc[d];
    visited[(size_t)nr][(size_t)nc] = true;
    m.corridor[(size_t)room_cell(nr)][(size_t)room_cell(nc)] = true;
    m.corridor[(size_t)(room_cell(r) + dr[d])][(size_t)(room_cell(c) + dc[d])] = true;
    stack.push_back({nr, nc});
  }

  // open dead ends: a dead-end room gains one extra connector chosen at random
  while (true) {
    std::vector<std::array<int64_t, 2>> dead;
    for (int64_t i = 0; i < rooms; ++i)
      for (int64_t j = 0; j < rooms; ++j) {
        int64_t r = room_cell(i), c = room_cell(j);
        if (m.open_neighbors(r, c) == 1) dead.push_back({i, j});
      }
    if (dead.empty()) break;
    for (auto [i, j] : dead) {
      int64_t r = room_cell(i), c = room_cell(j);
      std::vector<int64_t> closed;
      for (int64_t d = 0; d < 4; ++d) {
        int64_t ni = i + dr[d], nj = j + dc[d];
        if (ni >= 0 && ni < rooms && nj >= 0 && nj < rooms && !m.open(r + dr[d], c + dc[d]))
          closed.push_back(d);
      }
      if (closed.empty()) continue;
      int64_t d = closed[(size_t)rng.uniform_int((int64_t)closed.size())];
      m.corridor[(size_t)(r + dr[d])][(size_t)(c + dc[d])] = true;
    }
  }
  return m;
}

namespace detail {

inline void maze_decide_heading(const MazeWorld& m, MazeWorld::Agent& a, Rng& rng) {
  const int64_t dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
  std::vector<int64_t> open_dirs, forward_dirs;
  for (int64_t d = 0; d < 4; ++d) {
    if (!m.open(a.row + dr[d], a.col + dc[d])) continue;
    open_dirs.push_back(d);
    if (dr[d] == -a.dr && dc[d] == -a.dc) continue;  // reversal
    forward_dirs.push_back(d);
  }
  if (open_dirs.empty()) return;  // isolated cell; stay put
  int64_t pick;
  if (a.dr == 0 && a.dc == 0) {
    pick = open_dirs[(size_t)rng.uniform_int((int64_t)open_dirs.size())];  // initial heading
  } else if (forward_dirs.empty()) {
    pick = open_dirs[0];  // dead end: reverse (cannot happen in generated mazes)
  } else if ((int64_t)open_dirs.size() >= 3) {
    pick = forward_dirs[(size_t)rng.uniform_int((int64_t)forward_dirs.size())];
  } else {
    // straight corridor or corner: follow it
    pick = forward_dirs[0];
  }
  a.dr = dr[pick];
  a.dc = dc[pick];
}

}  // namespace detail

// The 8x8 corridor bitmap round-trips through a 16-hex-digit episode tag so
// evaluation can recover the ground-truth maze.
inline std::string maze_grid_to_tag(const MazeWorld& m) {
  uint64_t bits = 0;
  for (int64_t r = 0; r < MazeWorld::kGrid; ++r)
    for (int64_t c = 0; c < MazeWorld::kGrid; ++c)
      if (m.corridor[(size_t)r][(size_t)c]) bits |= 1ull << (r * MazeWorld::kGrid + c);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "maze:%016llx", (unsigned long long)bits);
  return buf;
}

inline MazeWorld maze_from_tag(const std::string& tag) {
  if (tag.rfind("maze:", 0) != 0 || tag.size() != 21)
    throw std::invalid_argument("not a maze episode tag: " + tag);
  uint64_t bits = std::stoull(tag.substr(5), nullptr, 16);
  MazeWorld m;
  for (int64_t r = 0; r < MazeWorld::kGrid; ++r)
    for (int64_t c = 0; c < MazeWorld::kGrid; ++c)
      m.corridor[(size_t)r][(size_t)c] = (bits >> (r * MazeWorld::kGrid + c)) & 1;
  return m;
}

inline void render_maze_background(const MazeWorld& m, uint8_t* rgb, int64_t H, int64_t W) {
  const int64_t cell_h = H / MazeWorld::kGrid, cell_w = W / MazeWorld::kGrid;
  fill_frame(rgb, H, W, 0, 0, 0);
  for (int64_t r = 0; r < MazeWorld::kGrid; ++r)
    for (int64_t c = 0; c < MazeWorld::kGrid; ++c)
      if (!m.corridor[(size_t)r][(size_t)c])
        fill_rect_px(rgb, H, W, c * cell_w, r * cell_h, cell_w, cell_h, kMazeWallColor);
}

// Agent center in pixel coordinates (64x64 frame reference).
inline std::array<double, 2> maze_agent_center_px(const MazeWorld::Agent& a) {
  double cx = (double)(a.col * MazeWorld::kCellPx) + (double)MazeWorld::kCellPx / 2.0;
  double cy = (double)(a.row * MazeWorld::kCellPx) + (double)MazeWorld::kCellPx / 2.0;
  cx += (double)a.dc * a.offset_px;
  cy += (double)a.dr * a.offset_px;
  return {cx, cy};
}

inline void maze_step_agents(MazeWorld& m, Rng& rng) {
  for (auto& a : m.agents) {
    if (a.offset_px == 0.0) detail::maze_decide_heading(m, a, rng);
    a.offset_px += (double)MazeWorld::kSpeedPx;
    if (a.offset_px >= (double)MazeWorld::kCellPx) {
      a.row += a.dr;
      a.col += a.dc;
      a.offset_px = 0.0;
    }
  }
}

inline Episode simulate_maze(MazeWorld world, int64_t n_agents, int64_t n_steps, Rng& rng,
                             int64_t hw = 64) {
  auto cells = world.corridor_cells();
  if (n_agents < 1 || n_agents > (int64_t)cells.size())
    throw std::invalid_argument("simulate_maze: n_agents exceeds free corridor cells");

  // distinct colors, distinct cells
  std::vector<int64_t> color_pool(kMazeAgentColors.begin(), kMazeAgentColors.end());
  world.agents.clear();
  for (int64_t i = 0; i < n_agents; ++i) {
    MazeWorld::Agent a;
    int64_t ci = rng.uniform_int((int64_t)cells.size());
    int64_t cell = cells[(size_t)ci];
    cells.erase(cells.begin() + ci);
    a.row = cell / MazeWorld::kGrid;
    a.col = cell % MazeWorld::kGrid;
    int64_t pi = rng.uniform_int((int64_t)color_pool.size());
    a.color = color_pool[(size_t)pi];
    color_pool.erase(color_pool.begin() + pi);
    world.agents.push_back(a);
  }

  const double scale = (double)hw / 64.0;
  Episode ep;
  ep.setting = "maze";
  ep.tag = maze_grid_to_tag(world);
  ep.frames = Tensor<uint8_t>(Shape{n_steps, 3, hw, hw});
  ep.annotations.resize((size_t)n_steps);

  Tensor<uint8_t> background(Shape{3, hw, hw});
  render_maze_background(world, background.ptr(), hw, hw);

  for (int64_t t = 0; t < n_steps; ++t) {
    if (t > 0) maze_step_agents(world, rng);
    uint8_t* rgb = ep.frames.ptr() + t * 3 * hw * hw;
    std::copy_n(background.ptr(), background.numel(), rgb);
    for (size_t i = 0; i < world.agents.size(); ++i) {
      auto [cx, cy] = maze_agent_center_px(world.agents[i]);
      draw_square_px(rgb, hw, hw, cx * scale, cy * scale, (double)MazeWorld::kAgentPx * scale,
                     kPalette[(size_t)world.agents[i].color]);
      ObjectAnnotation ann;
      ann.id = (int64_t)i;
      ann.center = {cx / 64.0, cy / 64.0};
      ann.bbox_hw = {MazeWorld::kAgentPx / 64.0, MazeWorld::kAgentPx / 64.0};
      ann.color = world.agents[i].color;
      ann.layer = 0;
      ep.annotations[(size_t)t].push_back(ann);
    }
  }
  return ep;
}

}  // namespace gswm
