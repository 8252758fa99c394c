#include "paln/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paln/check.hpp"

namespace paln {

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> gts,
                             double iou_threshold) {
  std::vector<int> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return detections[a].score > detections[b].score;
  });
  MatchResult result;
  result.matched.reserve(detections.size());
  std::vector<bool> gt_used(gts.size(), false);
  for (int idx : order) {
    int best_g = -1;
    double best = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double ov = iou(detections[idx].box, gts[g].box);
      if (ov > best) {
        best = ov;
        best_g = static_cast<int>(g);
      }
    }
    const bool is_tp = best_g >= 0 && best >= iou_threshold;
    if (is_tp) {
      gt_used[static_cast<std::size_t>(best_g)] = true;
      ++result.tp;
    } else {
      ++result.fp;
    }
    result.matched.push_back(is_tp);
  }
  result.fn = static_cast<int>(gts.size()) - result.tp;
  return result;
}

namespace {

struct PooledPass {
  // Per pooled detection in descending score order (ties by instance, then
  // input index): score and cumulative TP/FP counts after it.
  std::vector<double> scores;
  std::vector<int> tp_cum;
  std::vector<int> fp_cum;
  int total_gts = 0;
};

PooledPass pooled_matching(std::span<const EvalInstance> instances,
                           double iou_threshold) {
  struct Ref {
    double score;
    int instance;
    int index;
  };
  PooledPass pass;
  std::vector<Ref> refs;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    pass.total_gts += static_cast<int>(instances[i].gts.size());
    for (std::size_t d = 0; d < instances[i].detections.size(); ++d) {
      refs.push_back({instances[i].detections[d].score, static_cast<int>(i),
                      static_cast<int>(d)});
    }
  }
  std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    return a.score > b.score;
  });
  std::vector<std::vector<bool>> gt_used(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    gt_used[i].assign(instances[i].gts.size(), false);
  }
  int tp = 0, fp = 0;
  for (const Ref& ref : refs) {
    const EvalInstance& inst = instances[static_cast<std::size_t>(ref.instance)];
    const Detection& det = inst.detections[static_cast<std::size_t>(ref.index)];
    auto& used = gt_used[static_cast<std::size_t>(ref.instance)];
    int best_g = -1;
    double best = 0.0;
    for (std::size_t g = 0; g < inst.gts.size(); ++g) {
      if (used[g]) continue;
      const double ov = iou(det.box, inst.gts[g].box);
      if (ov > best) {
        best = ov;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best >= iou_threshold) {
      used[static_cast<std::size_t>(best_g)] = true;
      ++tp;
    } else {
      ++fp;
    }
    pass.scores.push_back(ref.score);
    pass.tp_cum.push_back(tp);
    pass.fp_cum.push_back(fp);
  }
  return pass;
}

}  // namespace

double average_precision(std::span<const EvalInstance> instances,
                         double iou_threshold) {
  const PooledPass pass = pooled_matching(instances, iou_threshold);
  PALN_CHECK(pass.total_gts > 0, "average precision undefined without ground truths");
  const std::size_t n = pass.scores.size();
  if (n == 0) return 0.0;
  // Precision envelope from the right, then sum precision * recall steps.
  std::vector<double> envelope(n);
  double run_max = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double prec =
        static_cast<double>(pass.tp_cum[k]) / static_cast<double>(k + 1);
    run_max = std::max(run_max, prec);
    envelope[k] = run_max;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double recall =
        static_cast<double>(pass.tp_cum[k]) / pass.total_gts;
    if (recall > prev_recall) {
      ap += (recall - prev_recall) * envelope[k];
      prev_recall = recall;
    }
  }
  return ap;
}

namespace {

PointMetrics point_metrics_from_counts(int tp, int fp, int fn) {
  PointMetrics m;
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / (tp + fp);
    m.far = static_cast<double>(fp) / (tp + fp);
  }
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / (tp + fn);
  if (m.precision + m.recall > 0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

}  // namespace

PointMetrics threshold_metrics(std::span<const EvalInstance> instances,
                               double threshold, double iou_threshold) {
  PALN_CHECK(threshold >= 0.0 && threshold <= 1.0,
             "threshold must be in [0,1], got ", threshold);
  int tp = 0, fp = 0, fn = 0;
  for (const EvalInstance& inst : instances) {
    std::vector<Detection> kept;
    for (const Detection& d : inst.detections) {
      if (d.score >= threshold) kept.push_back(d);
    }
    const MatchResult r = match_detections(kept, inst.gts, iou_threshold);
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
  }
  return point_metrics_from_counts(tp, fp, fn);
}

MetricsReport best_f1_operating_point(std::span<const EvalInstance> instances,
                                      double iou_threshold) {
  const PooledPass pass = pooled_matching(instances, iou_threshold);
  PALN_CHECK(!pass.scores.empty(), "need at least one detection");
  MetricsReport report;
  report.ap = average_precision(instances, iou_threshold);
  bool first = true;
  for (std::size_t k = 0; k < pass.scores.size(); ++k) {
    // Thresholds at distinct scores; prefix [0..k] is exactly the detections
    // with score >= scores[k].
    if (k + 1 < pass.scores.size() && pass.scores[k + 1] == pass.scores[k]) {
      continue;
    }
    const int tp = pass.tp_cum[k];
    const int fp = pass.fp_cum[k];
    const PointMetrics m =
        point_metrics_from_counts(tp, fp, pass.total_gts - tp);
    if (first || m.f1 > report.f1) {  // ties keep the higher threshold
      first = false;
      report.f1 = m.f1;
      report.precision = m.precision;
      report.recall = m.recall;
      report.far = m.far;
      report.threshold = pass.scores[k];
    }
  }
  return report;
}

std::vector<PrPoint> pr_curve(std::span<const EvalInstance> instances,
                              double iou_threshold) {
  const PooledPass pass = pooled_matching(instances, iou_threshold);
  std::vector<PrPoint> points;
  for (std::size_t k = 0; k < pass.scores.size(); ++k) {
    if (k + 1 < pass.scores.size() && pass.scores[k + 1] == pass.scores[k]) {
      continue;
    }
    PrPoint p;
    p.threshold = pass.scores[k];
    p.precision =
        static_cast<double>(pass.tp_cum[k]) / static_cast<double>(k + 1);
    p.recall = pass.total_gts > 0
                   ? static_cast<double>(pass.tp_cum[k]) / pass.total_gts
                   : 0.0;
    points.push_back(p);
  }
  return points;
}

AggregateStats aggregate_stats(std::span<const double> values) {
  PALN_CHECK(!values.empty(), "aggregate_stats needs at least one value");
  AggregateStats stats;
  const double n = static_cast<double>(values.size());
  for (double v : values) stats.avr += v;
  stats.avr /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - stats.avr) * (v - stats.avr);
    stats.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return stats;
}

}  // namespace paln
