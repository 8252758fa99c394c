#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "paln/checkpoint.hpp"
#include "paln/config.hpp"
#include "paln/reports.hpp"

using namespace paln;
using nlohmann::json;

TEST_CASE("config loading") {
  SUBCASE("empty object resolves to the desk-scale defaults") {
    const AppConfig cfg = config_from_json(json::object());
    CHECK(cfg.data.source_train == 512);
    CHECK(cfg.data.target_test == 64);
    CHECK(cfg.train.pretrain_iters == 1500);
    CHECK(cfg.train.da_iters == 600);
    CHECK(cfg.train.batch_source == 8);
    CHECK(cfg.train.repetitions == 5);
    CHECK(!cfg.train.alpha.has_value());
    CHECK(cfg.eval.iou_threshold == 0.5);
    // shift 1.0 resolves distinct target sensor parameters
    CHECK(cfg.data.target.channel_gain[0] != cfg.data.source.channel_gain[0]);
  }
  SUBCASE("negative alpha rejected with the key path") {
    try {
      config_from_json(json::parse(R"({"train": {"alpha": -1}})"));
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("train.alpha") != std::string::npos);
    }
  }
  SUBCASE("unknown keys rejected with the key path") {
    try {
      config_from_json(json::parse(R"({"train": {"warmup": 5}})"));
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("train.warmup") != std::string::npos);
    }
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"extra": {}})")), ConfigError);
    CHECK_THROWS_AS(
        config_from_json(json::parse(R"({"data": {"source": {"bogus": 1}}})")),
        ConfigError);
  }
  SUBCASE("paper-protocol settings load and resolve per mode") {
    const AppConfig cfg = config_from_json(json::parse(R"({
      "train": {
        "modes": ["plain_adv", "without_norm", "norm_d_and_p", "norm_p"],
        "repetitions": 10,
        "pretrain_iters": 40000,
        "decay_milestones": [28000, 35000],
        "da_iters": 10000,
        "batch_source": 32,
        "batch_target": 32
      }
    })"));
    const std::vector<TrainConfig> modes = mode_train_configs(cfg);
    REQUIRE(modes.size() == 4);
    CHECK(modes[0].alpha == 1.0);              // plain_adv
    CHECK(modes[2].alpha == 0.1);              // norm_d_and_p
    CHECK(modes[3].alpha == 1.0);              // norm_p
    CHECK(modes[2].a == std::vector<double>{1.0, 1.0});
    CHECK(modes[3].a == std::vector<double>{3.0, 1.0});
    CHECK(modes[0].pretrain_iters == 40000);
    CHECK(modes[0].decay_milestones == std::vector<int>{28000, 35000});
  }
  SUBCASE("explicit alpha applies to every mode") {
    const AppConfig cfg = config_from_json(json::parse(
        R"({"train": {"modes": ["norm_d_and_p", "norm_p"], "alpha": 0.25}})"));
    for (const TrainConfig& mode : mode_train_configs(cfg)) {
      CHECK(mode.alpha == 0.25);
    }
  }
  SUBCASE("resolved config round-trips to the identical document") {
    const AppConfig cfg = config_from_json(json::parse(
        R"({"data": {"shift": 0.5, "seed": 11}, "train": {"seed": 3, "modes": ["norm_p"]}})"));
    const json first = resolved_json(cfg);
    const json second = resolved_json(config_from_json(first));
    CHECK(first.dump(2) == second.dump(2));
  }
  SUBCASE("duplicate modes rejected") {
    CHECK_THROWS_AS(config_from_json(json::parse(
                        R"({"train": {"modes": ["norm_p", "norm_p"]}})")),
                    ConfigError);
  }
  SUBCASE("bad mode name rejected") {
    CHECK_THROWS_AS(config_from_json(json::parse(
                        R"({"train": {"modes": ["norm_q"]}})")),
                    ConfigError);
  }
}

namespace {

ExperimentOutcome fake_outcome(int repetitions) {
  ExperimentOutcome out;
  const TrainMode modes[] = {TrainMode::norm_p, TrainMode::without_da};
  for (TrainMode mode : modes) {
    std::vector<double> aps;
    for (int i = 0; i < repetitions; ++i) {
      RunResult run;
      run.mode = mode;
      run.seed = static_cast<std::uint64_t>(i);
      run.metrics.ap = 0.5 + 0.01 * i;
      run.metrics.f1 = 0.6;
      run.metrics.precision = 0.7;
      run.metrics.recall = 0.55;
      run.metrics.far = 0.3;
      aps.push_back(run.metrics.ap);
      out.runs.push_back(run);
    }
    ModeStats stats;
    stats.mode = mode;
    stats.ap = aggregate_stats(aps);
    const std::vector<double> constant(static_cast<std::size_t>(repetitions), 0.6);
    stats.f1 = aggregate_stats(constant);
    stats.precision = stats.recall = stats.far = stats.f1;
    out.stats.push_back(stats);
  }
  return out;
}

}  // namespace

TEST_CASE("metrics csv format") {
  SUBCASE("single-run row format") {
    const std::string csv = metrics_csv(fake_outcome(1), 1);
    std::istringstream lines(csv);
    std::string header, row;
    std::getline(lines, header);
    CHECK(header == "mode,stat,AP,F1,PR,RR,FAR");
    std::getline(lines, row);
    CHECK(row == "norm_p,0,0.5000,0.6000,0.7000,0.5500,0.3000");
  }
  SUBCASE("three runs give three run rows plus two summary rows per mode") {
    const std::string csv = metrics_csv(fake_outcome(3), 3);
    std::istringstream lines(csv);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line)) rows.push_back(line);
    REQUIRE(rows.size() == 1 + 2 * 5);
    CHECK(rows[1].rfind("norm_p,0,", 0) == 0);
    CHECK(rows[2].rfind("norm_p,1,", 0) == 0);
    CHECK(rows[3].rfind("norm_p,2,", 0) == 0);
    CHECK(rows[4].rfind("norm_p,AVR,0.5100", 0) == 0);
    CHECK(rows[5].rfind("norm_p,STDERR,0.0058", 0) == 0);
    CHECK(rows[6].rfind("without_da,0,", 0) == 0);
  }
}

TEST_CASE("pr curve emission") {
  const auto dir = std::filesystem::temp_directory_path() / "paln_pr_test";
  std::filesystem::create_directories(dir);
  std::vector<EvalInstance> data(1);
  data[0].gts = {{{0, 0, 10, 10}, 1}, {{20, 0, 30, 10}, 1}, {{40, 0, 50, 10}, 1}};
  data[0].detections = {{{0, 0, 10, 10}, 0.9, 1},
                        {{20, 0, 30, 10}, 0.8, 1},
                        {{70, 0, 80, 10}, 0.6, 1},
                        {{40, 0, 50, 10}, 0.4, 1}};
  emit_pr_curve(data, dir / "pr.csv", dir / "pr.svg");

  std::ifstream csv(dir / "pr.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "threshold,precision,recall");
  struct Row {
    double threshold, precision, recall;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(csv, line)) {
    Row r;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &r.threshold, &r.precision,
                        &r.recall) == 3);
    rows.push_back(r);
  }
  SUBCASE("one row per distinct score") { CHECK(rows.size() == 4); }
  SUBCASE("area under the emitted envelope equals average precision") {
    // Envelope rule over the emitted points, exactly as AP is defined.
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].recall <= prev_recall) continue;
      double envelope = 0.0;
      for (std::size_t j = k; j < rows.size(); ++j) {
        envelope = std::max(envelope, rows[j].precision);
      }
      ap += (rows[k].recall - prev_recall) * envelope;
      prev_recall = rows[k].recall;
    }
    CHECK(std::abs(ap - average_precision(data)) <= 1e-9);
  }
  SUBCASE("svg is a self-contained plot") {
    std::ifstream svg(dir / "pr.svg");
    const std::string body((std::istreambuf_iterator<char>(svg)),
                           std::istreambuf_iterator<char>());
    CHECK(body.find("<?xml") == 0);
    CHECK(body.find("<svg") != std::string::npos);
    CHECK(body.find("<polyline") != std::string::npos);
    CHECK(body.find("</svg>") != std::string::npos);
  }
  SUBCASE("perfect detector pins precision at one") {
    std::vector<EvalInstance> perfect(1);
    perfect[0].gts = data[0].gts;
    perfect[0].detections = {{{0, 0, 10, 10}, 0.9, 1},
                             {{20, 0, 30, 10}, 0.8, 1},
                             {{40, 0, 50, 10}, 0.7, 1}};
    emit_pr_curve(perfect, dir / "pr2.csv", dir / "pr2.svg");
    std::ifstream csv2(dir / "pr2.csv");
    std::getline(csv2, line);  // header
    while (std::getline(csv2, line)) {
      Row r;
      std::sscanf(line.c_str(), "%lf,%lf,%lf", &r.threshold, &r.precision, &r.recall);
      CHECK(r.precision == 1.0);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint byte format is pinned") {
  const auto path = std::filesystem::temp_directory_path() / "paln_golden.paln";
  const std::vector<NamedTensor> tensors = {
      {"t", Tensor::from({2}, {1.0, 2.0})}};
  save_checkpoint(path, tensors);
  std::ifstream f(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  const unsigned char expected[] = {
      'P', 'A', 'L', 'N',          // magic
      1,   0,   0,   0,            // version u32 LE
      1,   0,   0,   0,            // tensor count
      1,   0,                      // name length u16
      't',                         // name
      1,                           // rank
      2,   0,   0,   0,            // extent
      0x00, 0x00, 0x80, 0x3f,      // 1.0f LE
      0x00, 0x00, 0x00, 0x40,      // 2.0f LE
  };
  REQUIRE(bytes.size() == sizeof(expected));
  for (std::size_t i = 0; i < sizeof(expected); ++i) {
    CHECK(static_cast<unsigned char>(bytes[i]) == expected[i]);
  }
  std::filesystem::remove(path);
}
