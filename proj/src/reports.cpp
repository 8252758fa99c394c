#include "paln/reports.hpp"

#include <cstdio>
#include <fstream>

#include "paln/check.hpp"

namespace paln {
namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  PALN_CHECK(f.good(), "cannot open ", path.string(), " for writing");
  f << body;
  PALN_CHECK(f.good(), "short write to ", path.string());
}

}  // namespace

std::string metrics_csv(const ExperimentOutcome& outcome, int repetitions) {
  PALN_CHECK(repetitions >= 1 && !outcome.stats.empty() &&
                 outcome.runs.size() ==
                     outcome.stats.size() * static_cast<std::size_t>(repetitions),
             "outcome shape does not match repetitions");
  std::string out = "mode,stat,AP,F1,PR,RR,FAR\n";
  for (std::size_t m = 0; m < outcome.stats.size(); ++m) {
    const std::string mode = to_string(outcome.stats[m].mode);
    for (int i = 0; i < repetitions; ++i) {
      const RunResult& run =
          outcome.runs[m * static_cast<std::size_t>(repetitions) +
                       static_cast<std::size_t>(i)];
      out += mode + "," + std::to_string(run.seed) + "," +
             fixed4(run.metrics.ap) + "," + fixed4(run.metrics.f1) + "," +
             fixed4(run.metrics.precision) + "," + fixed4(run.metrics.recall) +
             "," + fixed4(run.metrics.far) + "\n";
    }
    const ModeStats& stats = outcome.stats[m];
    out += mode + ",AVR," + fixed4(stats.ap.avr) + "," + fixed4(stats.f1.avr) +
           "," + fixed4(stats.precision.avr) + "," + fixed4(stats.recall.avr) +
           "," + fixed4(stats.far.avr) + "\n";
    out += mode + ",STDERR," + fixed4(stats.ap.stderr_) + "," +
           fixed4(stats.f1.stderr_) + "," + fixed4(stats.precision.stderr_) +
           "," + fixed4(stats.recall.stderr_) + "," + fixed4(stats.far.stderr_) +
           "\n";
  }
  return out;
}

void emit_metrics_csv(const ExperimentOutcome& outcome, int repetitions,
                      const std::filesystem::path& path) {
  write_file(path, metrics_csv(outcome, repetitions));
}

void emit_pr_curve(std::span<const EvalInstance> instances,
                   const std::filesystem::path& csv_path,
                   const std::filesystem::path& svg_path,
                   double iou_threshold) {
  const std::vector<PrPoint> points = pr_curve(instances, iou_threshold);
  PALN_CHECK(!points.empty(), "PR curve needs at least one detection");

  std::string csv = "threshold,precision,recall\n";
  for (const PrPoint& p : points) {
    csv += full_precision(p.threshold) + "," + full_precision(p.precision) +
           "," + full_precision(p.recall) + "\n";
  }
  write_file(csv_path, csv);

  // 500x500 plot area with a 50px margin; recall on x, precision on y.
  const double size = 500.0, margin = 50.0;
  auto px = [&](double recall) { return margin + recall * (size - 2 * margin); };
  auto py = [&](double precision) {
    return size - margin - precision * (size - 2 * margin);
  };
  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"500\" height=\"500\" "
         "viewBox=\"0 0 500 500\">\n";
  svg += "<rect width=\"500\" height=\"500\" fill=\"white\"/>\n";
  svg += "<line x1=\"50\" y1=\"450\" x2=\"450\" y2=\"450\" stroke=\"black\"/>\n";
  svg += "<line x1=\"50\" y1=\"450\" x2=\"50\" y2=\"50\" stroke=\"black\"/>\n";
  svg += "<text x=\"250\" y=\"485\" text-anchor=\"middle\" font-size=\"14\">recall</text>\n";
  svg += "<text x=\"15\" y=\"250\" text-anchor=\"middle\" font-size=\"14\" "
         "transform=\"rotate(-90 15 250)\">precision</text>\n";
  svg += "<text x=\"50\" y=\"468\" text-anchor=\"middle\" font-size=\"12\">0</text>\n";
  svg += "<text x=\"450\" y=\"468\" text-anchor=\"middle\" font-size=\"12\">1</text>\n";
  svg += "<text x=\"38\" y=\"454\" text-anchor=\"middle\" font-size=\"12\">0</text>\n";
  svg += "<text x=\"38\" y=\"54\" text-anchor=\"middle\" font-size=\"12\">1</text>\n";
  svg += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) svg += " ";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f", px(points[i].recall),
                  py(points[i].precision));
    svg += buf;
  }
  svg += "\"/>\n</svg>\n";
  write_file(svg_path, svg);
}

}  // namespace paln
