#pragma once

#include "gswm/data/io.hpp"
#include "gswm/sim/balls.hpp"
#include "gswm/sim/maze.hpp"

namespace gswm {

struct DatasetSpec {
  std::string setting;  // occlusion | interaction | two_layer | two_layer_dense |
                        // single_ball | maze
  int64_t train = 0, val = 0, test = 0;
  int64_t steps = 0;  // episode length (ignored for single_ball)

  static DatasetSpec defaults(const std::string& setting) {
    DatasetSpec s;
    s.setting = setting;
    if (setting == "single_ball") {
      s.train = 10000;
      s.val = 100;
      s.test = 100;
      s.steps = 9;
    } else if (setting == "maze") {
      s.train = 10000;
      s.val = 100;
      s.test = 100;
      s.steps = 99;
    } else {
      ball_mode_from_name(setting);  // validates
      s.train = 10000;
      s.val = 200;
      s.test = 200;
      s.steps = 100;
    }
    return s;
  }
};

inline Episode generate_episode(const std::string& setting, int64_t steps, Rng& rng) {
  if (setting == "single_ball") return simulate_single_ball(rng);
  if (setting == "maze") {
    MazeWorld world = generate_maze(rng);
    int64_t n_agents = 3 + (int64_t)(rng.coin());
    return simulate_maze(world, n_agents, steps, rng);
  }
  return simulate_balls(ball_mode_from_name(setting), steps, rng);
}

// Deterministic dataset generation: episode i of a split gets its own rng
// stream derived from the base seed. Returns the written manifest.
inline DatasetManifest generate_dataset(const DatasetSpec& spec, const fs::path& root,
                                        uint64_t seed,
                                        const std::function<void(const std::string&, int64_t,
                                                                 int64_t)>& progress = {}) {
  DatasetManifest m;
  m.setting = spec.setting;
  m.image_hw = 64;
  m.episode_len = spec.setting == "single_ball" ? 9 : spec.steps;
  m.split_sizes = {{"train", spec.train}, {"val", spec.val}, {"test", spec.test}};

  uint32_t agg = 0;
  const std::array<std::pair<std::string, uint64_t>, 3> splits = {
      {{"train", 0ull}, {"val", 1000000ull}, {"test", 2000000ull}}};
  for (auto& [split, offset] : splits) {
    int64_t count = m.split_sizes.at(split);
    for (int64_t i = 0; i < count; ++i) {
      uint64_t ep_seed = splitmix64(seed ^ splitmix64(offset + (uint64_t)i));
      Episode ep;
      for (int attempt = 0;; ++attempt) {
        Rng rng(ep_seed + (uint64_t)attempt);  // reseed on generation failure
        try {
          ep = generate_episode(spec.setting, m.episode_len, rng);
          break;
        } catch (const GenerationFailed&) {
          if (attempt > 16) throw;
        }
      }
      ep.seed = ep_seed;
      write_episode(root, split, i, ep);
      m.seeds[split].push_back(ep_seed);
      uint32_t crc = crc32_bytes(ep.frames.ptr(), (size_t)ep.frames.numel());
      agg = (uint32_t)::crc32(agg, (const Bytef*)&crc, 4);
      if (progress && (i % 200 == 0 || i + 1 == count)) progress(split, i + 1, count);
    }
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", agg);
  m.checksum = buf;
  write_manifest(root, m);
  return m;
}

}  // namespace gswm
