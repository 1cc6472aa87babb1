#pragma once

#include <limits>
#include <map>
#include <stdexcept>

#include "gswm/sim/maze.hpp"

namespace gswm {

struct TrackEntry {
  int64_t id = 0;
  std::array<double, 2> center{0, 0};   // arena units
  std::array<double, 2> bbox_hw{0, 0};  // (h, w) arena units
  double score = 1.0;
};

struct TrackSet {
  std::vector<std::vector<TrackEntry>> frames;
};

struct UndefinedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimum-cost one-to-one assignment (Hungarian, potentials formulation).
// cost is n x m with n <= m; returns row -> column.
inline std::vector<int64_t> hungarian_min_assign(const std::vector<std::vector<double>>& cost) {
  const double kInf = std::numeric_limits<double>::infinity();
  int64_t n = (int64_t)cost.size();
  if (n == 0) return {};
  int64_t m = (int64_t)cost[0].size();
  if (n > m) throw std::invalid_argument("hungarian_min_assign: needs n <= m");
  std::vector<double> u((size_t)n + 1, 0), v((size_t)m + 1, 0);
  std::vector<int64_t> p((size_t)m + 1, 0), way((size_t)m + 1, 0);
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv((size_t)m + 1, kInf);
    std::vector<char> used((size_t)m + 1, 0);
    do {
      used[(size_t)j0] = 1;
      int64_t i0 = p[(size_t)j0], j1 = -1;
      double delta = kInf;
      for (int64_t j = 1; j <= m; ++j)
        if (!used[(size_t)j]) {
          double cur = cost[(size_t)(i0 - 1)][(size_t)(j - 1)] - u[(size_t)i0] - v[(size_t)j];
          if (cur < minv[(size_t)j]) {
            minv[(size_t)j] = cur;
            way[(size_t)j] = j0;
          }
          if (minv[(size_t)j] < delta) {
            delta = minv[(size_t)j];
            j1 = j;
          }
        }
      for (int64_t j = 0; j <= m; ++j)
        if (used[(size_t)j]) {
          u[(size_t)p[(size_t)j]] += delta;
          v[(size_t)j] -= delta;
        } else {
          minv[(size_t)j] -= delta;
        }
      j0 = j1;
    } while (p[(size_t)j0] != 0);
    do {
      int64_t j1 = way[(size_t)j0];
      p[(size_t)j0] = p[(size_t)j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int64_t> row_to_col((size_t)n, -1);
  for (int64_t j = 1; j <= m; ++j)
    if (p[(size_t)j] > 0) row_to_col[(size_t)(p[(size_t)j] - 1)] = j - 1;
  return row_to_col;
}

struct CenterMatch {
  std::vector<std::pair<int64_t, int64_t>> pairs;  // (pred index, gt index)
  std::vector<int64_t> unmatched_pred, unmatched_gt;
  double total_cost = 0;
};

// Minimum-total-Euclidean-cost one-to-one matching between two point sets.
inline CenterMatch match_centers(const std::vector<std::array<double, 2>>& pred,
                                 const std::vector<std::array<double, 2>>& gt) {
  CenterMatch out;
  int64_t np = (int64_t)pred.size(), ng = (int64_t)gt.size();
  if (np == 0 || ng == 0) {
    for (int64_t i = 0; i < np; ++i) out.unmatched_pred.push_back(i);
    for (int64_t j = 0; j < ng; ++j) out.unmatched_gt.push_back(j);
    return out;
  }
  auto dist = [&](int64_t i, int64_t j) {
    double dx = pred[(size_t)i][0] - gt[(size_t)j][0];
    double dy = pred[(size_t)i][1] - gt[(size_t)j][1];
    return std::sqrt(dx * dx + dy * dy);
  };
  bool transposed = np > ng;
  int64_t n = transposed ? ng : np, m = transposed ? np : ng;
  std::vector<std::vector<double>> cost((size_t)n, std::vector<double>((size_t)m));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j)
      cost[(size_t)i][(size_t)j] = transposed ? dist(j, i) : dist(i, j);
  auto r2c = hungarian_min_assign(cost);
  std::vector<char> pred_used((size_t)np, 0), gt_used((size_t)ng, 0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t j = r2c[(size_t)i];
    int64_t pi = transposed ? j : i, gj = transposed ? i : j;
    out.pairs.push_back({pi, gj});
    out.total_cost += dist(pi, gj);
    pred_used[(size_t)pi] = 1;
    gt_used[(size_t)gj] = 1;
  }
  for (int64_t i = 0; i < np; ++i)
    if (!pred_used[(size_t)i]) out.unmatched_pred.push_back(i);
  for (int64_t j = 0; j < ng; ++j)
    if (!gt_used[(size_t)j]) out.unmatched_gt.push_back(j);
  return out;
}

// Per-frame matched position error (mean over GT objects; unmatched GT are
// charged the arena half-diagonal), plus the sum over the first 10 frames.
struct PositionErrorCurve {
  std::vector<double> per_step;
  double sum_first_10 = 0;
};

inline PositionErrorCurve position_error_curve(const TrackSet& pred, const TrackSet& gt) {
  if (pred.frames.size() != gt.frames.size())
    throw std::invalid_argument("position_error_curve: frame count mismatch");
  const double half_diag = std::sqrt(2.0) / 2.0;
  PositionErrorCurve out;
  for (size_t t = 0; t < gt.frames.size(); ++t) {
    std::vector<std::array<double, 2>> pc, gc;
    for (auto& e : pred.frames[t]) pc.push_back(e.center);
    for (auto& e : gt.frames[t]) gc.push_back(e.center);
    double err = 0;
    if (!gc.empty()) {
      CenterMatch m = match_centers(pc, gc);
      for (auto& [pi, gj] : m.pairs) {
        double dx = pc[(size_t)pi][0] - gc[(size_t)gj][0];
        double dy = pc[(size_t)pi][1] - gc[(size_t)gj][1];
        err += std::sqrt(dx * dx + dy * dy);
      }
      err += (double)m.unmatched_gt.size() * half_diag;
      err /= (double)gc.size();
    }
    out.per_step.push_back(err);
    if (t < 10) out.sum_first_10 += err;
  }
  return out;
}

inline double box_iou(const TrackEntry& a, const TrackEntry& b) {
  auto inter_1d = [](double ca, double la, double cb, double lb) {
    double lo = std::max(ca - la / 2, cb - lb / 2);
    double hi = std::min(ca + la / 2, cb + lb / 2);
    return std::max(0.0, hi - lo);
  };
  double iw = inter_1d(a.center[0], a.bbox_hw[1], b.center[0], b.bbox_hw[1]);
  double ih = inter_1d(a.center[1], a.bbox_hw[0], b.center[1], b.bbox_hw[0]);
  double inter = iw * ih;
  double uni = a.bbox_hw[0] * a.bbox_hw[1] + b.bbox_hw[0] * b.bbox_hw[1] - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

struct MotaBreakdown {
  int64_t fn = 0, fp = 0, idsw = 0, gt_total = 0, tp = 0;
  double mota = 0;
};

// CLEAR-MOT: per-frame Hungarian matching gated at IoU >= threshold with
// match persistence; MOTA = 1 - (FN + FP + IDSW) / total GT detections.
inline MotaBreakdown mota(const TrackSet& pred, const TrackSet& gt, double iou_threshold = 0.5) {
  MotaBreakdown out;
  for (auto& f : gt.frames) out.gt_total += (int64_t)f.size();
  if (out.gt_total == 0) throw UndefinedMetric("mota: no ground-truth objects");

  std::map<int64_t, int64_t> last_match;  // gt id -> pred id (persisted across frames)
  for (size_t t = 0; t < gt.frames.size() && t < pred.frames.size(); ++t) {
    const auto& gf = gt.frames[t];
    const auto& pf = pred.frames[t];
    std::vector<char> gt_done(gf.size(), 0), pred_done(pf.size(), 0);
    std::vector<std::pair<int64_t, int64_t>> matches;  // (gt idx, pred idx)

    // keep persistent matches when still valid
    for (size_t gi = 0; gi < gf.size(); ++gi) {
      auto it = last_match.find(gf[gi].id);
      if (it == last_match.end()) continue;
      for (size_t pi = 0; pi < pf.size(); ++pi) {
        if (pred_done[pi] || pf[pi].id != it->second) continue;
        if (box_iou(gf[gi], pf[pi]) >= iou_threshold) {
          matches.push_back({(int64_t)gi, (int64_t)pi});
          gt_done[gi] = pred_done[pi] = 1;
        }
        break;
      }
    }
    // Hungarian on the rest, gated by IoU
    std::vector<int64_t> gids, pids;
    for (size_t gi = 0; gi < gf.size(); ++gi)
      if (!gt_done[gi]) gids.push_back((int64_t)gi);
    for (size_t pi = 0; pi < pf.size(); ++pi)
      if (!pred_done[pi]) pids.push_back((int64_t)pi);
    if (!gids.empty() && !pids.empty()) {
      bool transposed = gids.size() > pids.size();
      int64_t n = (int64_t)(transposed ? pids.size() : gids.size());
      int64_t m = (int64_t)(transposed ? gids.size() : pids.size());
      std::vector<std::vector<double>> cost((size_t)n, std::vector<double>((size_t)m));
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
          int64_t gi = transposed ? gids[(size_t)j] : gids[(size_t)i];
          int64_t pi = transposed ? pids[(size_t)i] : pids[(size_t)j];
          double iou = box_iou(gf[(size_t)gi], pf[(size_t)pi]);
          cost[(size_t)i][(size_t)j] = iou >= iou_threshold ? 1.0 - iou : 1e6;
        }
      auto r2c = hungarian_min_assign(cost);
      for (int64_t i = 0; i < n; ++i) {
        int64_t j = r2c[(size_t)i];
        int64_t gi = transposed ? gids[(size_t)j] : gids[(size_t)i];
        int64_t pi = transposed ? pids[(size_t)i] : pids[(size_t)j];
        if (box_iou(gf[(size_t)gi], pf[(size_t)pi]) < iou_threshold) continue;  // gated out
        matches.push_back({gi, pi});
        gt_done[(size_t)gi] = pred_done[(size_t)pi] = 1;
      }
    }

    for (auto& [gi, pi] : matches) {
      auto it = last_match.find(gf[(size_t)gi].id);
      if (it != last_match.end() && it->second != pf[(size_t)pi].id) ++out.idsw;
      last_match[gf[(size_t)gi].id] = pf[(size_t)pi].id;
      ++out.tp;
    }
    for (size_t gi = 0; gi < gf.size(); ++gi)
      if (!gt_done[gi]) ++out.fn;
    for (size_t pi = 0; pi < pf.size(); ++pi)
      if (!pred_done[pi]) ++out.fp;
  }
  // frames present in gt but missing in pred entirely count as misses
  for (size_t t = pred.frames.size(); t < gt.frames.size(); ++t)
    out.fn += (int64_t)gt.frames[t].size();

  out.mota = 1.0 - (double)(out.fn + out.fp + out.idsw) / (double)out.gt_total;
  return out;
}

// Count predicted agents whose center lies within a corridor cell, with a
// half-agent-width tolerance measured against the nearest corridor rectangle.
inline std::vector<int64_t> corridor_occupancy(const TrackSet& pred, const MazeWorld& world) {
  const double cell = (double)MazeWorld::kCellPx;                  // in 64-px reference
  const double tol = (double)MazeWorld::kAgentPx / 2.0;            // 3 px
  std::vector<int64_t> counts;
  for (auto& frame : pred.frames) {
    int64_t n = 0;
    for (auto& e : frame) {
      double px = e.center[0] * 64.0, py = e.center[1] * 64.0;
      double best = 1e9;
      for (int64_t r = 0; r < MazeWorld::kGrid; ++r)
        for (int64_t c = 0; c < MazeWorld::kGrid; ++c) {
          if (!world.corridor[(size_t)r][(size_t)c]) continue;
          double x0 = (double)c * cell, x1 = x0 + cell;
          double y0 = (double)r * cell, y1 = y0 + cell;
          double dx = std::max({x0 - px, 0.0, px - x1});
          double dy = std::max({y0 - py, 0.0, py - y1});
          best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
      if (best <= tol) ++n;
    }
    counts.push_back(n);
  }
  return counts;
}

struct ModeCoverage {
  double left = 0, right = 0, invalid = 0;
};

// Classify single-ball rollouts by the final-frame ball x position.
inline ModeCoverage mode_coverage(const std::vector<TrackSet>& rollouts) {
  if (rollouts.size() < 2) throw std::invalid_argument("mode_coverage: needs >= 2 rollouts");
  ModeCoverage out;
  for (auto& r : rollouts) {
    if (r.frames.empty() || r.frames.back().empty()) {
      out.invalid += 1;
      continue;
    }
    const TrackEntry* best = &r.frames.back()[0];
    for (auto& e : r.frames.back())
      if (e.score > best->score) best = &e;
    double x = best->center[0];
    if (x < 0.4) out.left += 1;
    else if (x > 0.6) out.right += 1;
    else out.invalid += 1;
  }
  double n = (double)rollouts.size();
  out.left /= n;
  out.right /= n;
  out.invalid /= n;
  return out;
}

}  // namespace gswm
