#pragma once

// Temporal action localization scoring: tIoU, greedy score-ordered matching,
// all-point interpolated AP, and mAP over a set of tIoU thresholds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dsta/errors.hpp"

namespace dsta {

inline const std::vector<double> kDefaultThresholds = {0.3, 0.4, 0.5, 0.6, 0.7};

// Ground-truth action, inclusive frame indices.
struct IntervalAnnotation {
  std::string video_id;
  std::int64_t start = 0;
  std::int64_t end = 0;
  int label = 0;

  std::int64_t frames() const { return end - start + 1; }
  friend bool operator==(const IntervalAnnotation&, const IntervalAnnotation&) = default;
};

struct Proposal {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  int label = 0;
  double score = 0.0;
};

// Closed real segment [start, end].
struct Segment {
  double start = 0.0;
  double end = 0.0;
};

inline double tiou(Segment a, Segment b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  if (uni <= 0.0) return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  return inter / uni;
}

inline Segment segment_of(const IntervalAnnotation& g) {
  return {static_cast<double>(g.start), static_cast<double>(g.end)};
}
inline Segment segment_of(const Proposal& p) { return {p.start, p.end}; }

struct ApResult {
  double ap = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  bool no_predictions = false;  // GT present but nothing predicted
};

// Predictions ranked by score descending, then earlier start, then input order.
inline std::vector<std::size_t> ranking_order(const std::vector<Proposal>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    return preds[a].start < preds[b].start;
  });
  return order;
}

// AP of one class at one threshold. All items are assumed to share the class.
inline ApResult match_and_ap(const std::vector<IntervalAnnotation>& gts,
                             const std::vector<Proposal>& preds, double threshold) {
  ApResult res;
  if (preds.empty()) {
    res.no_predictions = !gts.empty();
    return res;
  }
  for (const auto& p : preds) {
    if (!std::isfinite(p.score)) throw ConfigError("match_and_ap: non-finite score");
  }
  if (gts.empty()) {
    res.false_positives = preds.size();
    return res;
  }

  std::map<std::string, std::vector<std::size_t>> gt_by_video;
  for (std::size_t i = 0; i < gts.size(); ++i) gt_by_video[gts[i].video_id].push_back(i);
  std::vector<bool> used(gts.size(), false);

  const auto order = ranking_order(preds);
  std::vector<bool> is_tp(order.size(), false);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Proposal& p = preds[order[rank]];
    const auto it = gt_by_video.find(p.video_id);
    if (it == gt_by_video.end()) continue;
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t g : it->second) {
      if (used[g]) continue;
      const double iou = tiou(segment_of(p), segment_of(gts[g]));
      if (iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    if (best >= threshold && best >= 0.0) {
      used[best_gt] = true;
      is_tp[rank] = true;
    }
  }

  const auto n = order.size();
  const double n_gt = static_cast<double>(gts.size());
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_tp[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / n_gt;
  }
  // Precision envelope: best precision at any recall >= this one.
  for (std::size_t i = n - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    res.ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  res.true_positives = tp;
  res.false_positives = n - tp;
  return res;
}

struct EvalReport {
  std::vector<double> thresholds;
  std::map<int, std::vector<double>> per_class_ap;  // class -> AP per threshold
  std::vector<int> classes_without_predictions;
  std::vector<double> map_per_threshold;
  double average_map = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_pred = 0;
};

// mAP at each threshold over every class that has ground truth or
// predictions; a class with predictions but no ground truth scores AP 0.
inline EvalReport evaluate(const std::vector<IntervalAnnotation>& gts,
                           const std::vector<Proposal>& preds,
                           const std::vector<double>& thresholds = kDefaultThresholds) {
  if (gts.empty()) throw ConfigError("evaluate: no ground-truth annotations");
  if (thresholds.empty()) throw ConfigError("evaluate: empty threshold list");
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("evaluate: threshold outside [0, 1]");
  }
  std::map<int, std::vector<IntervalAnnotation>> gt_by_class;
  std::map<int, std::vector<Proposal>> pred_by_class;
  for (const auto& g : gts) {
    if (g.start > g.end || g.start < 0) {
      throw ConfigError("evaluate: invalid ground-truth interval in video " + g.video_id);
    }
    gt_by_class[g.label].push_back(g);
  }
  for (const auto& p : preds) {
    if (p.start > p.end) throw ConfigError("evaluate: proposal with start > end in " + p.video_id);
    pred_by_class[p.label].push_back(p);
  }
  std::set<int> classes;
  for (const auto& [c, _] : gt_by_class) classes.insert(c);
  for (const auto& [c, _] : pred_by_class) classes.insert(c);

  EvalReport rep;
  rep.thresholds = thresholds;
  rep.num_gt = gts.size();
  rep.num_pred = preds.size();
  rep.map_per_threshold.assign(thresholds.size(), 0.0);
  static const std::vector<IntervalAnnotation> kNoGt;
  static const std::vector<Proposal> kNoPred;
  for (int c : classes) {
    const auto git = gt_by_class.find(c);
    const auto pit = pred_by_class.find(c);
    const auto& cg = git == gt_by_class.end() ? kNoGt : git->second;
    const auto& cp = pit == pred_by_class.end() ? kNoPred : pit->second;
    auto& aps = rep.per_class_ap[c];
    for (double thr : thresholds) aps.push_back(match_and_ap(cg, cp, thr).ap);
    if (cp.empty()) rep.classes_without_predictions.push_back(c);
  }
  const double n_cls = static_cast<double>(classes.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    double acc = 0.0;
    for (const auto& [c, aps] : rep.per_class_ap) acc += aps[i];
    rep.map_per_threshold[i] = acc / n_cls;
  }
  rep.average_map = std::accumulate(rep.map_per_threshold.begin(), rep.map_per_threshold.end(), 0.0) /
                    static_cast<double>(thresholds.size());
  return rep;
}

}  // namespace dsta
