#ifndef PALN_METRICS_HPP_
#define PALN_METRICS_HPP_

#include <span>
#include <vector>

#include "paln/geometry.hpp"

namespace paln {

// One test image's detections and ground truths.
struct EvalInstance {
  std::vector<Detection> detections;
  std::vector<GroundTruth> gts;
};

struct MatchResult {
  int tp = 0, fp = 0, fn = 0;
  // Per detection, ordered by descending score (ties by input index).
  std::vector<bool> matched;
};

// Greedy matching by descending score: a detection is a true positive when
// its best-IoU unmatched gt clears the threshold; each gt matches once.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> gts,
                             double iou_threshold = 0.5);

// All-point interpolated AP over detections pooled across the test set:
// area under the running-max precision envelope over recall.
// Rejected when there are no ground truths.
double average_precision(std::span<const EvalInstance> instances,
                         double iou_threshold = 0.5);

struct PointMetrics {
  double precision = 0, recall = 0, f1 = 0, far = 0;
};

// Filters detections by score >= threshold, matches, then
// PR = TP/(TP+FP), RR = TP/(TP+FN), F1 harmonic mean, FAR = FP/(TP+FP).
// PR and FAR are 0 when nothing clears the threshold.
PointMetrics threshold_metrics(std::span<const EvalInstance> instances,
                               double threshold, double iou_threshold = 0.5);

struct MetricsReport {
  double ap = 0, f1 = 0, precision = 0, recall = 0, far = 0;
  double threshold = 0;  // operating point
};

// Sweeps every distinct detection score as a threshold and returns the one
// maximizing F1 (ties to the higher threshold), with AP alongside.
MetricsReport best_f1_operating_point(std::span<const EvalInstance> instances,
                                      double iou_threshold = 0.5);

struct PrPoint {
  double threshold = 0, precision = 0, recall = 0;
};

// Precision/recall at every distinct score threshold, descending.
std::vector<PrPoint> pr_curve(std::span<const EvalInstance> instances,
                              double iou_threshold = 0.5);

struct AggregateStats {
  double avr = 0;
  double stderr_ = 0;  // sample stddev / sqrt(n); 0 for a single run
};

AggregateStats aggregate_stats(std::span<const double> values);

}  // namespace paln

#endif  // PALN_METRICS_HPP_
