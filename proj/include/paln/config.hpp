#ifndef PALN_CONFIG_HPP_
#define PALN_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "paln/train.hpp"

namespace paln {

// Invalid configuration input; the message names the offending key path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  double shift = 1.0;
  std::uint64_t seed = 9000;
  int image_side = 64;
  int source_train = 512;
  int target_train = 256;
  int target_test = 64;
  int target_labels = 256;
  DomainParams source = source_domain_params();  // fully resolved
  DomainParams target = target_domain_params(1.0);
};

struct TrainSection {
  std::vector<TrainMode> modes = {TrainMode::without_da, TrainMode::plain_adv,
                                  TrainMode::norm_p};
  int repetitions = 5;
  int pretrain_iters = 1500;
  int da_iters = 600;
  double lr_model = 1e-2;
  double lr_da_model = 1e-3;
  double lr_disc = 1e-3;
  double lr_disc_p = 2e-4;
  double momentum = 0.9;
  double da_momentum = 0.5;
  int batch_source = 8;
  int batch_target = 8;
  std::optional<double> alpha;             // absent: per-mode default
  std::optional<std::vector<double>> a;    // absent: per-mode default
  std::uint64_t seed = 42;
  std::vector<int> decay_milestones = {1050, 1313};
  std::vector<int> da_decay_milestones = {150, 300};
  int pred_det_warmup = 100;
  bool augment = true;
  std::vector<int> channels = {16, 32, 32};
  std::vector<BoxTemplate> templates = {{8.0, 1.0}, {14.0, 1.0}};
  bool separate_heads = false;
  bool presoftmax_vectors = false;
};

struct EvalSection {
  double iou_threshold = 0.5;
  double confidence_floor = 0.05;
  double nms_threshold = 0.5;
  std::string report = "best_f1";  // or "fixed"
  double fixed_threshold = 0.5;
};

struct AppConfig {
  DataConfig data;
  TrainSection train;
  EvalSection eval;
  std::string output_directory = "out";
};

// Parses and validates; unknown keys, wrong types, and out-of-range values
// are rejected with the key path. Missing keys take the defaults above.
AppConfig config_from_json(const nlohmann::json& json);
AppConfig load_config(const std::filesystem::path& path);

// Fully resolved echo; loading it back reproduces the identical document.
nlohmann::json resolved_json(const AppConfig& config);

// Dataset bundle from the data section; per-role seeds derive from data.seed.
DatasetBundle build_datasets(const DataConfig& data);

// One fully resolved TrainConfig per configured mode (alpha and a filled
// from the per-mode defaults when absent).
std::vector<TrainConfig> mode_train_configs(const AppConfig& config);
TrainConfig single_train_config(const AppConfig& config, TrainMode mode);

EvalConfig eval_config(const AppConfig& config);

}  // namespace paln

#endif  // PALN_CONFIG_HPP_
