// Command-line front door: dataset generation, pretraining, adaptation,
// evaluation, multi-run experiments, and PR-curve emission.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "paln/checkpoint.hpp"
#include "paln/config.hpp"
#include "paln/reports.hpp"
#include "paln/train.hpp"

namespace fs = std::filesystem;
using namespace paln;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string data_dir;  // optional: load datasets instead of generating
};

AppConfig prepare(const CommonArgs& args) {
  AppConfig cfg = args.config_path.empty() ? AppConfig{}
                                           : load_config(args.config_path);
  if (args.seed) cfg.train.seed = *args.seed;
  if (!args.out_dir.empty()) cfg.output_directory = args.out_dir;
  fs::create_directories(cfg.output_directory);
  std::ofstream f(fs::path(cfg.output_directory) / "resolved_config.json");
  if (!f.good()) {
    throw std::runtime_error("cannot write resolved config under " +
                             cfg.output_directory);
  }
  f << resolved_json(cfg).dump(2) << "\n";
  return cfg;
}

DatasetBundle datasets_for(const AppConfig& cfg, const CommonArgs& args) {
  if (args.data_dir.empty()) return build_datasets(cfg.data);
  DatasetBundle bundle;
  const fs::path base = args.data_dir;
  bundle.source_train = load_dataset(base / "source_train");
  bundle.target_train = load_dataset(base / "target_train");
  bundle.target_test = load_dataset(base / "target_test");
  bundle.target_labels = load_dataset(base / "target_labels");
  return bundle;
}

DetectorModel model_from_checkpoint(const AppConfig& cfg, const std::string& path) {
  TrainConfig train = single_train_config(cfg, TrainMode::without_da);
  Rng scratch(0);
  DetectorModel model(train.detector, scratch);
  std::vector<NamedTensor> params = model.named_parameters();
  const std::vector<NamedTensor> loaded = load_checkpoint(path);
  restore_parameters(params, loaded);
  return model;
}

std::vector<EvalInstance> detect_test_set(const DetectorModel& model,
                                          const DatasetBundle& data,
                                          const EvalConfig& eval) {
  std::vector<EvalInstance> instances;
  for (const Scene& scene : data.target_test) {
    EvalInstance inst;
    inst.detections =
        infer(model, scene.image, eval.confidence_floor, eval.nms_threshold);
    inst.gts.assign(scene.boxes.begin(), scene.boxes.end());
    instances.push_back(std::move(inst));
  }
  return instances;
}

int run_gen_data(const CommonArgs& args) {
  const AppConfig cfg = prepare(args);
  const DatasetBundle bundle = build_datasets(cfg.data);
  const fs::path base = fs::path(cfg.output_directory) / "datasets";
  save_dataset(bundle.source_train, base / "source_train");
  save_dataset(bundle.target_train, base / "target_train");
  save_dataset(bundle.target_test, base / "target_test");
  save_dataset(bundle.target_labels, base / "target_labels");
  std::printf("wrote %zu+%zu train, %zu test, %zu labeled-target scenes under %s\n",
              bundle.source_train.size(), bundle.target_train.size(),
              bundle.target_test.size(), bundle.target_labels.size(),
              base.string().c_str());
  return 0;
}

int run_pretrain(const CommonArgs& args) {
  const AppConfig cfg = prepare(args);
  const DatasetBundle data = datasets_for(cfg, args);
  const TrainConfig train = single_train_config(cfg, TrainMode::without_da);
  const DetectorModel model = pretrain_source(train, data.source_train);
  const fs::path path = fs::path(cfg.output_directory) / "pretrained.paln";
  const std::vector<NamedTensor> params = model.named_parameters();
  save_checkpoint(path, params);
  std::printf("pretrained %d iterations, checkpoint at %s\n",
              train.pretrain_iters, path.string().c_str());
  return 0;
}

int run_adapt(const CommonArgs& args, const std::string& model_path,
              const std::string& mode_name) {
  const AppConfig cfg = prepare(args);
  const auto mode = train_mode_from_string(mode_name);
  if (!mode) throw ConfigError("unknown mode '" + mode_name + "'");
  const DatasetBundle data = datasets_for(cfg, args);
  DetectorModel model = model_from_checkpoint(cfg, model_path);
  const TrainConfig train = single_train_config(cfg, *mode);
  adapt(model, train, data);
  const fs::path path = fs::path(cfg.output_directory) /
                        ("adapted_" + to_string(*mode) + ".paln");
  const std::vector<NamedTensor> params = model.named_parameters();
  save_checkpoint(path, params);
  std::printf("adapted with mode %s for %d iterations, checkpoint at %s\n",
              to_string(*mode).c_str(), train.da_iters, path.string().c_str());
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& model_path) {
  const AppConfig cfg = prepare(args);
  const DatasetBundle data = datasets_for(cfg, args);
  const DetectorModel model = model_from_checkpoint(cfg, model_path);
  const MetricsReport r = evaluate_model(model, data.target_test, eval_config(cfg));
  std::printf("AP %.4f  F1 %.4f  PR %.4f  RR %.4f  FAR %.4f  (threshold %.4f)\n",
              r.ap, r.f1, r.precision, r.recall, r.far, r.threshold);
  nlohmann::json out;
  out["AP"] = r.ap;
  out["F1"] = r.f1;
  out["PR"] = r.precision;
  out["RR"] = r.recall;
  out["FAR"] = r.far;
  out["threshold"] = r.threshold;
  std::ofstream f(fs::path(cfg.output_directory) / "eval.json");
  f << out.dump(2) << "\n";
  return 0;
}

int run_experiment_cmd(const CommonArgs& args, int threads) {
  const AppConfig cfg = prepare(args);
  const DatasetBundle data = datasets_for(cfg, args);
  const std::vector<TrainConfig> modes = mode_train_configs(cfg);
  const fs::path out = cfg.output_directory;
  const ExperimentOutcome outcome =
      run_experiment(modes, cfg.train.repetitions, data, eval_config(cfg),
                     out / "checkpoints", threads);
  emit_metrics_csv(outcome, cfg.train.repetitions, out / "metrics.csv");
  for (const ModeStats& s : outcome.stats) {
    std::printf("%-14s AP %.4f +- %.4f\n", to_string(s.mode).c_str(), s.ap.avr,
                s.ap.stderr_);
  }
  std::printf("metrics at %s\n", (out / "metrics.csv").string().c_str());
  return 0;
}

int run_plot(const CommonArgs& args, const std::string& model_path) {
  const AppConfig cfg = prepare(args);
  const DatasetBundle data = datasets_for(cfg, args);
  const DetectorModel model = model_from_checkpoint(cfg, model_path);
  const std::vector<EvalInstance> instances =
      detect_test_set(model, data, eval_config(cfg));
  const fs::path out = cfg.output_directory;
  emit_pr_curve(instances, out / "pr_curve.csv", out / "pr_curve.svg",
                cfg.eval.iou_threshold);
  std::printf("PR curve at %s and %s\n", (out / "pr_curve.csv").string().c_str(),
              (out / "pr_curve.svg").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive single-shot vehicle detection on synthetic scenes"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonArgs args;
  std::string model_path;
  std::string mode_name = "norm_p";
  int threads = 0;

  auto add_common = [&](CLI::App* cmd, bool with_data = true) {
    cmd->add_option("--config", args.config_path, "JSON experiment config");
    cmd->add_option("--seed", args.seed, "override the training seed");
    cmd->add_option("--out", args.out_dir, "output directory");
    if (with_data) {
      cmd->add_option("--data", args.data_dir,
                      "load datasets from a gen-data directory instead of "
                      "generating them");
    }
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate and save the datasets");
  add_common(gen, false);
  CLI::App* pre = app.add_subcommand("pretrain", "pretrain on the source domain");
  add_common(pre);
  CLI::App* ada = app.add_subcommand("adapt", "adapt a pretrained model");
  add_common(ada);
  ada->add_option("--model", model_path, "pretrained checkpoint")->required();
  ada->add_option("--mode", mode_name, "training mode");
  CLI::App* eva = app.add_subcommand("eval", "evaluate a checkpoint on target test");
  add_common(eva);
  eva->add_option("--model", model_path, "model checkpoint")->required();
  CLI::App* exp = app.add_subcommand("experiment", "run all modes x seeds");
  add_common(exp);
  exp->add_option("--threads", threads, "parallel workers (0 = hardware)");
  CLI::App* plot = app.add_subcommand("plot", "emit the PR curve for a checkpoint");
  add_common(plot);
  plot->add_option("--model", model_path, "model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n" << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(args);
    if (pre->parsed()) return run_pretrain(args);
    if (ada->parsed()) return run_adapt(args, model_path, mode_name);
    if (eva->parsed()) return run_eval(args, model_path);
    if (exp->parsed()) return run_experiment_cmd(args, threads);
    if (plot->parsed()) return run_plot(args, model_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
