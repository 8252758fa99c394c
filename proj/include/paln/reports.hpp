#ifndef PALN_REPORTS_HPP_
#define PALN_REPORTS_HPP_

#include <filesystem>
#include <string>

#include "paln/metrics.hpp"
#include "paln/train.hpp"

namespace paln {

// metrics.csv: header `mode,stat,AP,F1,PR,RR,FAR`, then per mode (configured
// order): one row per run with the seed in the stat column (seeds ascending),
// an AVR row, and a STDERR row. Values carry 4 fractional digits.
std::string metrics_csv(const ExperimentOutcome& outcome, int repetitions);
void emit_metrics_csv(const ExperimentOutcome& outcome, int repetitions,
                      const std::filesystem::path& path);

// PR-curve CSV (`threshold,precision,recall`, one row per distinct score,
// full precision) and a self-contained SVG polyline plot over [0,1]^2.
void emit_pr_curve(std::span<const EvalInstance> instances,
                   const std::filesystem::path& csv_path,
                   const std::filesystem::path& svg_path,
                   double iou_threshold = 0.5);

}  // namespace paln

#endif  // PALN_REPORTS_HPP_
