#include <algorithm>
#include <numeric>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "paln/metrics.hpp"
#include "paln/rng.hpp"

using namespace paln;

namespace {

// Brute-force all-point AP: enumerate every prefix of the score-sorted
// pooled detection list, build the PR points, and integrate the running-max
// precision over recall increments. Matching per prefix is recomputed from
// scratch so this stays independent of the implementation's incremental pass.
double ap_oracle(const std::vector<EvalInstance>& instances, double iou_thr) {
  struct Ref {
    double score;
    int inst;
    int idx;
  };
  std::vector<Ref> refs;
  int total_gts = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    total_gts += static_cast<int>(instances[i].gts.size());
    for (std::size_t d = 0; d < instances[i].detections.size(); ++d) {
      refs.push_back({instances[i].detections[d].score, static_cast<int>(i),
                      static_cast<int>(d)});
    }
  }
  std::stable_sort(refs.begin(), refs.end(),
                   [](const Ref& a, const Ref& b) { return a.score > b.score; });
  std::vector<double> precision, recall;
  for (std::size_t k = 1; k <= refs.size(); ++k) {
    // match the first k detections greedily, per instance
    std::vector<std::vector<bool>> used(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      used[i].assign(instances[i].gts.size(), false);
    }
    int tp = 0;
    for (std::size_t r = 0; r < k; ++r) {
      const EvalInstance& inst = instances[static_cast<std::size_t>(refs[r].inst)];
      const Detection& det = inst.detections[static_cast<std::size_t>(refs[r].idx)];
      int best_g = -1;
      double best = 0.0;
      for (std::size_t g = 0; g < inst.gts.size(); ++g) {
        if (used[static_cast<std::size_t>(refs[r].inst)][g]) continue;
        const double ov = iou(det.box, inst.gts[g].box);
        if (ov > best) {
          best = ov;
          best_g = static_cast<int>(g);
        }
      }
      if (best_g >= 0 && best >= iou_thr) {
        used[static_cast<std::size_t>(refs[r].inst)][static_cast<std::size_t>(best_g)] = true;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k));
    recall.push_back(static_cast<double>(tp) / total_gts);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    if (recall[k] <= prev_recall) continue;
    double envelope = 0.0;
    for (std::size_t j = k; j < precision.size(); ++j) {
      envelope = std::max(envelope, precision[j]);
    }
    ap += (recall[k] - prev_recall) * envelope;
    prev_recall = recall[k];
  }
  return ap;
}

BoxXYXY unit_box_at(double x, double y) { return {x, y, x + 10, y + 10}; }

}  // namespace

TEST_CASE("match_detections") {
  SUBCASE("exact hit") {
    std::vector<Detection> dets = {{unit_box_at(0, 0), 0.9, 1}};
    std::vector<GroundTruth> gts = {{unit_box_at(0, 0), 1}};
    const MatchResult r = match_detections(dets, gts);
    CHECK(r.tp == 1);
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
  }
  SUBCASE("no detections leaves all gts unmatched") {
    std::vector<GroundTruth> gts = {{unit_box_at(0, 0), 1},
                                    {unit_box_at(20, 0), 1},
                                    {unit_box_at(40, 0), 1}};
    const MatchResult r = match_detections({}, gts);
    CHECK(r.fn == 3);
  }
  SUBCASE("second detection on the same gt is a false positive") {
    std::vector<Detection> dets = {{unit_box_at(0, 0), 0.9, 1},
                                   {unit_box_at(0, 0), 0.8, 1}};
    std::vector<GroundTruth> gts = {{unit_box_at(0, 0), 1}};
    const MatchResult r = match_detections(dets, gts);
    CHECK(r.tp == 1);
    CHECK(r.fp == 1);
    CHECK(r.fn == 0);
  }
}

TEST_CASE("average precision") {
  SUBCASE("single correct detection") {
    std::vector<EvalInstance> data(1);
    data[0].gts = {{unit_box_at(0, 0), 1}};
    data[0].detections = {{unit_box_at(0, 0), 0.9, 1}};
    CHECK(average_precision(data) == doctest::Approx(1.0));
  }
  SUBCASE("TP FP TP ordering gives 0.8333") {
    std::vector<EvalInstance> data(1);
    data[0].gts = {{unit_box_at(0, 0), 1}, {unit_box_at(30, 0), 1}};
    data[0].detections = {{unit_box_at(0, 0), 0.9, 1},
                          {unit_box_at(60, 0), 0.8, 1},
                          {unit_box_at(30, 0), 0.7, 1}};
    CHECK(average_precision(data) == doctest::Approx(0.5 + 0.5 * (2.0 / 3.0)));
  }
  SUBCASE("all false positives") {
    std::vector<EvalInstance> data(1);
    data[0].gts = {{unit_box_at(0, 0), 1}};
    data[0].detections = {{unit_box_at(40, 40), 0.9, 1}};
    CHECK(average_precision(data) == 0.0);
  }
  SUBCASE("no ground truth rejected") {
    std::vector<EvalInstance> data(1);
    data[0].detections = {{unit_box_at(0, 0), 0.9, 1}};
    CHECK_THROWS_AS(average_precision(data), std::invalid_argument);
  }
  SUBCASE("matches the brute-force oracle on exhaustive small instances") {
    Rng rng(19);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<EvalInstance> data(1 + rng.uniform_int(0, 1));
      int total_gts = 0;
      for (EvalInstance& inst : data) {
        const int ng = static_cast<int>(rng.uniform_int(0, 4));
        total_gts += ng;
        for (int g = 0; g < ng; ++g) {
          inst.gts.push_back({unit_box_at(rng.uniform(0, 50), rng.uniform(0, 50)), 1});
        }
        const int nd = static_cast<int>(rng.uniform_int(0, 6));
        for (int d = 0; d < nd; ++d) {
          inst.detections.push_back(
              {unit_box_at(rng.uniform(0, 50), rng.uniform(0, 50)),
               rng.uniform(0, 1), 1});
        }
      }
      if (total_gts == 0) continue;
      CHECK(average_precision(data) == doctest::Approx(ap_oracle(data, 0.5)).epsilon(1e-12));
    }
  }
  SUBCASE("duplicate detection of an already-matched gt never increases AP") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<EvalInstance> data(1);
      for (int g = 0; g < 3; ++g) {
        data[0].gts.push_back({unit_box_at(20.0 * g, 0), 1});
      }
      for (int d = 0; d < 4; ++d) {
        data[0].detections.push_back(
            {unit_box_at(20.0 * rng.uniform_int(0, 2), rng.uniform(0, 2)),
             rng.uniform(0, 1), 1});
      }
      // Find a true positive; its gt is matched by the time any lower-score
      // duplicate is processed.
      const MatchResult match = match_detections(data[0].detections, data[0].gts);
      std::vector<int> order(data[0].detections.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return data[0].detections[a].score > data[0].detections[b].score;
      });
      int tp_index = -1;
      for (std::size_t k = 0; k < order.size(); ++k) {
        if (match.matched[k]) {
          tp_index = order[k];
          break;
        }
      }
      if (tp_index < 0) continue;
      const double base = average_precision(data);
      std::vector<EvalInstance> more = data;
      double low = 1.0;
      for (const Detection& d : data[0].detections) low = std::min(low, d.score);
      more[0].detections.push_back(
          {data[0].detections[static_cast<std::size_t>(tp_index)].box,
           low * rng.uniform(0.0, 0.99), 1});
      CHECK(average_precision(more) <= base + 1e-12);
    }
  }
  SUBCASE("same input order gives the same AP") {
    std::vector<EvalInstance> data(1);
    data[0].gts = {{unit_box_at(0, 0), 1}, {unit_box_at(30, 0), 1}};
    data[0].detections = {{unit_box_at(0, 0), 0.8, 1},
                          {unit_box_at(30, 0), 0.8, 1},
                          {unit_box_at(60, 0), 0.8, 1}};
    CHECK(average_precision(data) == average_precision(data));
  }
}

TEST_CASE("threshold metrics") {
  SUBCASE("hand counts") {
    // 8 TP at high scores, 2 FP, 2 missed gts.
    std::vector<EvalInstance> data(1);
    for (int g = 0; g < 10; ++g) data[0].gts.push_back({unit_box_at(20.0 * g, 0), 1});
    for (int d = 0; d < 8; ++d) {
      data[0].detections.push_back({unit_box_at(20.0 * d, 0), 0.9, 1});
    }
    data[0].detections.push_back({unit_box_at(0, 40), 0.8, 1});
    data[0].detections.push_back({unit_box_at(20, 40), 0.8, 1});
    const PointMetrics m = threshold_metrics(data, 0.5);
    CHECK(m.precision == doctest::Approx(0.8));
    CHECK(m.recall == doctest::Approx(0.8));
    CHECK(m.f1 == doctest::Approx(0.8));
    CHECK(m.far == doctest::Approx(0.2));
  }
  SUBCASE("threshold one filters everything") {
    std::vector<EvalInstance> data(1);
    data[0].gts = {{unit_box_at(0, 0), 1}};
    data[0].detections = {{unit_box_at(0, 0), 0.9, 1}};
    const PointMetrics m = threshold_metrics(data, 1.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
  }
  SUBCASE("PR plus FAR is one whenever something clears the threshold") {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<EvalInstance> data(2);
      for (EvalInstance& inst : data) {
        for (int g = 0; g < 2; ++g) {
          inst.gts.push_back({unit_box_at(rng.uniform(0, 40), rng.uniform(0, 40)), 1});
        }
        for (int d = 0; d < 4; ++d) {
          inst.detections.push_back(
              {unit_box_at(rng.uniform(0, 40), rng.uniform(0, 40)),
               rng.uniform(0, 1), 1});
        }
      }
      const double thr = rng.uniform(0, 1);
      int above = 0;
      for (const EvalInstance& inst : data) {
        for (const Detection& d : inst.detections) above += d.score >= thr;
      }
      const PointMetrics m = threshold_metrics(data, thr);
      if (above > 0) {
        CHECK(m.precision + m.far == doctest::Approx(1.0).epsilon(1e-12));
      } else {
        CHECK(m.precision == 0.0);
        CHECK(m.far == 0.0);
      }
    }
  }
}

TEST_CASE("best F1 operating point") {
  SUBCASE("separable scores reach recall-limited F1") {
    std::vector<EvalInstance> data(1);
    for (int g = 0; g < 4; ++g) data[0].gts.push_back({unit_box_at(20.0 * g, 0), 1});
    for (int d = 0; d < 3; ++d) {
      data[0].detections.push_back({unit_box_at(20.0 * d, 0), 0.9 - 0.1 * d, 1});
    }
    data[0].detections.push_back({unit_box_at(0, 40), 0.2, 1});
    const MetricsReport r = best_f1_operating_point(data);
    // All TPs above all FPs: best point includes the 3 TPs only.
    CHECK(r.threshold == doctest::Approx(0.7));
    CHECK(r.precision == doctest::Approx(1.0));
    CHECK(r.recall == doctest::Approx(0.75));
    CHECK(r.f1 == doctest::Approx(2.0 * 0.75 / 1.75));
  }
  SUBCASE("single correct detection has F1 one at its own score") {
    std::vector<EvalInstance> data(1);
    data[0].gts = {{unit_box_at(0, 0), 1}};
    data[0].detections = {{unit_box_at(0, 0), 0.37, 1}};
    const MetricsReport r = best_f1_operating_point(data);
    CHECK(r.threshold == doctest::Approx(0.37));
    CHECK(r.f1 == doctest::Approx(1.0));
  }
  SUBCASE("returned threshold dominates random thresholds") {
    Rng rng(31);
    std::vector<EvalInstance> data(3);
    for (EvalInstance& inst : data) {
      for (int g = 0; g < 3; ++g) {
        inst.gts.push_back({unit_box_at(rng.uniform(0, 40), rng.uniform(0, 40)), 1});
      }
      for (int d = 0; d < 6; ++d) {
        inst.detections.push_back(
            {unit_box_at(rng.uniform(0, 40), rng.uniform(0, 40)),
             rng.uniform(0, 1), 1});
      }
    }
    const MetricsReport r = best_f1_operating_point(data);
    for (int i = 0; i < 100; ++i) {
      const PointMetrics m = threshold_metrics(data, rng.uniform(0, 1));
      CHECK(r.f1 >= m.f1 - 1e-12);
    }
  }
}

TEST_CASE("aggregate stats") {
  SUBCASE("hand formula") {
    const std::vector<double> values = {1, 2, 3};
    const AggregateStats s = aggregate_stats(values);
    CHECK(s.avr == doctest::Approx(2.0));
    CHECK(s.stderr_ == doctest::Approx(1.0 / std::sqrt(3.0)));
  }
  SUBCASE("mean and stderr of metric triple") {
    const std::vector<double> values = {0.1, 0.2, 0.3};
    const AggregateStats s = aggregate_stats(values);
    CHECK(s.avr == doctest::Approx(0.2));
    CHECK(s.stderr_ == doctest::Approx(0.1 / std::sqrt(3.0)));
  }
  SUBCASE("constant values have zero spread") {
    const std::vector<double> values = {0.5, 0.5, 0.5, 0.5};
    CHECK(aggregate_stats(values).stderr_ == 0.0);
  }
  SUBCASE("single run reports zero stderr") {
    const std::vector<double> one = {0.7};
    CHECK(aggregate_stats(one).stderr_ == 0.0);
  }
  SUBCASE("empty input rejected") {
    CHECK_THROWS_AS(aggregate_stats({}), std::invalid_argument);
  }
  SUBCASE("matches a two-pass oracle") {
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = static_cast<int>(rng.uniform_int(1, 12));
      std::vector<double> values(static_cast<std::size_t>(n));
      for (double& v : values) v = rng.uniform(0, 1);
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= n;
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double expected_stderr =
          n > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
      const AggregateStats s = aggregate_stats(values);
      CHECK(std::abs(s.avr - mean) <= 1e-12);
      CHECK(std::abs(s.stderr_ - expected_stderr) <= 1e-12);
    }
  }
}
