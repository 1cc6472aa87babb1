#pragma once

#include "gswm/data/io.hpp"
#include "gswm/model/swm.hpp"

namespace gswm {

// Evaluation drivers shared by the CLI and the acceptance suite.

template <class S>
Tensor<S> episodes_to_frames(const std::vector<Episode>& eps, int64_t t0, int64_t len,
                             int64_t model_hw) {
  int64_t B = (int64_t)eps.size();
  int64_t H = eps[0].height(), W = eps[0].width();
  Tensor<S> raw(Shape{B, len, 3, H, W});
  for (int64_t b = 0; b < B; ++b) {
    const Episode& ep = eps[(size_t)b];
    for (int64_t t = 0; t < len; ++t) {
      const uint8_t* src = ep.frames.ptr() + (t0 + t) * 3 * H * W;
      S* dst = raw.ptr() + (b * len + t) * 3 * H * W;
      for (int64_t i = 0; i < 3 * H * W; ++i) dst[i] = (S)src[i] / S(255);
    }
  }
  if (H == model_hw) return raw;
  NoGradGuard ng;
  Var<S> v = Var<S>::constant(raw.reshaped({B * len, 3, H, W}));
  Tensor<S> pooled = avg_pool2d(v, H / model_hw).val();
  return pooled.reshaped({B, len, 3, model_hw, model_hw});
}

inline TrackSet annotations_to_tracks(const Episode& ep, int64_t t0, int64_t len) {
  TrackSet ts;
  for (int64_t t = t0; t < t0 + len; ++t) {
    std::vector<TrackEntry> frame;
    for (auto& a : ep.annotations[(size_t)t])
      frame.push_back({a.id, a.center, a.bbox_hw, 1.0});
    ts.frames.push_back(std::move(frame));
  }
  return ts;
}

struct GenerationEval {
  std::vector<double> pos_err_mean, pos_err_std;  // per generation step
  double pos_err_sum10_mean = 0;
  double recon_mota = 0;
  int64_t episodes = 0;

  json to_json() const {
    return json{{"pos_err_mean", pos_err_mean},
                {"pos_err_std", pos_err_std},
                {"pos_err_sum10_mean", pos_err_sum10_mean},
                {"recon_mota", recon_mota},
                {"episodes", episodes}};
  }
};

// Conditioned generation on test episodes: per-step matched position error of
// the generated trajectories plus CLEAR-MOT tracking over the reconstruction
// phase.
template <class S>
GenerationEval eval_generation(Gswm<S>& model, const fs::path& root, const std::string& split,
                               int64_t n_episodes, int64_t n_cond, int64_t n_gen,
                               bool deterministic, uint64_t seed) {
  DatasetManifest m = read_manifest(root);
  n_episodes = std::min<int64_t>(n_episodes, m.split_sizes.at(split));
  Rng rng(splitmix64(seed ^ 0x6576616cULL));

  std::vector<std::vector<double>> per_step((size_t)n_gen);
  double sum10_total = 0;
  MotaBreakdown agg;
  int64_t batch = std::min<int64_t>(model.cfg.batch, n_episodes);

  for (int64_t start = 0; start < n_episodes; start += batch) {
    int64_t B = std::min(batch, n_episodes - start);
    std::vector<Episode> eps;
    for (int64_t b = 0; b < B; ++b) eps.push_back(read_episode(root, split, start + b));
    Tensor<S> frames = episodes_to_frames<S>(eps, 0, n_cond, model.cfg.image_hw);
    auto res = model.rollout(frames, n_cond, n_gen, 1, rng, deterministic);

    for (int64_t b = 0; b < B; ++b) {
      TrackSet gt_gen = annotations_to_tracks(eps[(size_t)b], n_cond, n_gen);
      PositionErrorCurve curve = position_error_curve(res.gen_tracks[0][(size_t)b], gt_gen);
      for (int64_t t = 0; t < n_gen; ++t) per_step[(size_t)t].push_back(curve.per_step[(size_t)t]);
      sum10_total += curve.sum_first_10;

      TrackSet gt_recon = annotations_to_tracks(eps[(size_t)b], 0, n_cond);
      MotaBreakdown mb = mota(res.recon_tracks[(size_t)b], gt_recon);
      agg.fn += mb.fn;
      agg.fp += mb.fp;
      agg.idsw += mb.idsw;
      agg.gt_total += mb.gt_total;
    }
  }

  GenerationEval out;
  out.episodes = n_episodes;
  for (auto& v : per_step) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= (double)v.size();
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    out.pos_err_mean.push_back(mean);
    out.pos_err_std.push_back(std::sqrt(var / (double)v.size()));
  }
  out.pos_err_sum10_mean = sum10_total / (double)n_episodes;
  out.recon_mota = 1.0 - (double)(agg.fn + agg.fp + agg.idsw) / (double)agg.gt_total;
  return out;
}

// Single-ball bimodality: condition on the shared descent prefix and branch
// stochastic rollouts.
template <class S>
ModeCoverage eval_mode_coverage(Gswm<S>& model, const fs::path& root, const std::string& split,
                                int64_t n_cond, int64_t n_samples, uint64_t seed) {
  Episode ep = read_episode(root, split, 0);
  int64_t n_gen = ep.length() - n_cond;
  Rng rng(splitmix64(seed ^ 0x6d6f6465ULL));
  Tensor<S> frames = episodes_to_frames<S>({ep}, 0, n_cond, model.cfg.image_hw);
  auto res = model.rollout(frames, n_cond, n_gen, n_samples, rng, /*deterministic=*/false);
  std::vector<TrackSet> rollouts;
  for (auto& sample : res.gen_tracks) rollouts.push_back(sample[0]);
  return mode_coverage(rollouts);
}

struct OccupancyEval {
  double mean_occupancy = 0;   // mean in-corridor agent count over the window
  double mean_agents = 0;      // mean ground-truth agent count
  std::vector<double> per_step_mean;
  int64_t episodes = 0;

  json to_json() const {
    return json{{"mean_occupancy", mean_occupancy},
                {"mean_agents", mean_agents},
                {"per_step_mean", per_step_mean},
                {"episodes", episodes}};
  }
};

// Maze situation awareness: fraction of predicted agents that stay within the
// ground-truth corridors over the first generation steps.
template <class S>
OccupancyEval eval_occupancy(Gswm<S>& model, const fs::path& root, const std::string& split,
                             int64_t n_episodes, int64_t n_cond, int64_t n_gen, uint64_t seed) {
  DatasetManifest m = read_manifest(root);
  n_episodes = std::min<int64_t>(n_episodes, m.split_sizes.at(split));
  Rng rng(splitmix64(seed ^ 0x6f636375ULL));
  OccupancyEval out;
  out.per_step_mean.assign((size_t)n_gen, 0.0);
  int64_t batch = std::min<int64_t>(model.cfg.batch, n_episodes);

  for (int64_t start = 0; start < n_episodes; start += batch) {
    int64_t B = std::min(batch, n_episodes - start);
    std::vector<Episode> eps;
    for (int64_t b = 0; b < B; ++b) eps.push_back(read_episode(root, split, start + b));
    Tensor<S> frames = episodes_to_frames<S>(eps, 0, n_cond, model.cfg.image_hw);
    auto res = model.rollout(frames, n_cond, n_gen, 1, rng, /*deterministic=*/false);
    for (int64_t b = 0; b < B; ++b) {
      MazeWorld world = maze_from_tag(eps[(size_t)b].tag);
      auto counts = corridor_occupancy(res.gen_tracks[0][(size_t)b], world);
      double acc = 0;
      for (int64_t t = 0; t < n_gen; ++t) {
        acc += (double)counts[(size_t)t];
        out.per_step_mean[(size_t)t] += (double)counts[(size_t)t];
      }
      out.mean_occupancy += acc / (double)n_gen;
      out.mean_agents += (double)eps[(size_t)b].annotations[0].size();
    }
  }
  for (auto& v : out.per_step_mean) v /= (double)n_episodes;
  out.mean_occupancy /= (double)n_episodes;
  out.mean_agents /= (double)n_episodes;
  out.episodes = n_episodes;
  return out;
}

}  // namespace gswm
