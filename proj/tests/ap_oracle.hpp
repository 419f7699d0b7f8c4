#pragma once

// Brute-force reference for single-class AP, written without sharing code with
// tal_eval.hpp: explicit selection-sort ranking, explicit greedy matching, and
// AP as a sum over true-positive ranks of (1/#gt) * best precision at or after
// that rank.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "dsta/tal_eval.hpp"

namespace dsta::testing {

inline double oracle_tiou(double s1, double e1, double s2, double e2) {
  const double lo = std::max(s1, s2), hi = std::min(e1, e2);
  const double inter = hi > lo ? hi - lo : 0.0;
  const double uni = (e1 - s1) + (e2 - s2) - inter;
  if (uni <= 0.0) return (s1 == s2 && e1 == e2) ? 1.0 : 0.0;
  return inter / uni;
}

inline double oracle_ap(const std::vector<IntervalAnnotation>& gts,
                        const std::vector<Proposal>& preds, double thr) {
  if (gts.empty() || preds.empty()) return 0.0;
  // Ranking by repeated selection of the best remaining prediction.
  std::vector<std::size_t> order;
  std::vector<bool> taken(preds.size(), false);
  for (std::size_t r = 0; r < preds.size(); ++r) {
    std::size_t best = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (taken[i]) continue;
      if (best == preds.size()) {
        best = i;
        continue;
      }
      const Proposal& a = preds[i];
      const Proposal& b = preds[best];
      if (a.score > b.score || (a.score == b.score && a.start < b.start)) best = i;
    }
    taken[best] = true;
    order.push_back(best);
  }
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> tp(order.size(), false);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Proposal& p = preds[order[r]];
    double best_iou = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video_id != p.video_id) continue;
      const double iou = oracle_tiou(p.start, p.end, static_cast<double>(gts[g].start),
                                     static_cast<double>(gts[g].end));
      if (iou > best_iou) {
        best_iou = iou;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best_iou >= thr) {
      used[best_g] = true;
      tp[r] = true;
    }
  }
  double ap = 0.0;
  std::size_t hits = 0;
  std::vector<double> prec(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (tp[r]) ++hits;
    prec[r] = static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!tp[r]) continue;
    double best = 0.0;
    for (std::size_t j = r; j < order.size(); ++j) best = std::max(best, prec[j]);
    ap += best / static_cast<double>(gts.size());
  }
  return ap;
}

struct MicroInstance {
  std::vector<IntervalAnnotation> gts;
  std::vector<Proposal> preds;
};

// Up to 4 GT and 4 predictions over two videos of 30 frames. Scores come from
// a coarse grid so ties occur; starts are integers so tie-breaks by start occur.
inline MicroInstance random_micro_instance(std::mt19937_64& rng, int label = 0) {
  MicroInstance m;
  std::uniform_int_distribution<int> count(1, 4), pcount(0, 4), pos(0, 25), len(0, 6), vid(0, 1),
      grid(1, 5);
  const int ng = count(rng), np = pcount(rng);
  for (int i = 0; i < ng; ++i) {
    const int s = pos(rng);
    m.gts.push_back({"v" + std::to_string(vid(rng)), s, s + len(rng), label});
  }
  for (int i = 0; i < np; ++i) {
    const double s = pos(rng) + (rng() % 2 ? 0.5 : 0.0);
    m.preds.push_back({"v" + std::to_string(vid(rng)), s, s + len(rng), label, 0.2 * grid(rng)});
  }
  return m;
}

}  // namespace dsta::testing
