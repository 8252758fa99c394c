#ifndef PALN_TRAIN_HPP_
#define PALN_TRAIN_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "paln/alignment.hpp"
#include "paln/detector.hpp"
#include "paln/metrics.hpp"
#include "paln/optim.hpp"
#include "paln/synth.hpp"

namespace paln {

enum class TrainMode {
  without_da,    // source-only baseline, no adaptation
  plain_adv,     // feature alignment only
  without_norm,  // feature + prediction alignment, unweighted
  norm_d_and_p,  // CWN on discriminator and detector sides
  norm_p,        // CWN on the detector side only
  reference,     // supervised on source plus labeled target
};

std::string to_string(TrainMode mode);
std::optional<TrainMode> train_mode_from_string(const std::string& name);

// Per-mode hyperparameter defaults: alpha is 0.1 for norm_d_and_p and 1
// otherwise; a is (3,1) for norm_p and (1,1) otherwise.
double default_alpha(TrainMode mode);
std::vector<double> default_class_hyper(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::norm_p;
  int pretrain_iters = 1500;
  int da_iters = 600;
  double lr_model = 1e-2;     // pretraining
  double lr_da_model = 1e-3;  // model updates during adaptation
  double lr_disc = 1e-3;      // feature discriminator
  // The prediction discriminator moves slowly: it averages the prediction
  // gap over many batches instead of chasing each one, and its pressure
  // fades as the distributions align.
  double lr_disc_p = 2e-4;
  double momentum = 0.9;
  double da_momentum = 0.5;  // adversarial phases oscillate at high momentum
  int batch_source = 8;
  int batch_target = 8;
  double alpha = 1.0;
  std::vector<double> a = {1.0, 1.0};
  std::uint64_t seed = 42;
  std::vector<int> decay_milestones = {1050, 1313};
  // x0.1 on both model and discriminator rates during adaptation; timed
  // before the adversarial drift phase sets in.
  std::vector<int> da_decay_milestones = {150, 300};
  // Model-side prediction alignment stays off while the prediction
  // discriminator learns the actual gap; a fresh D_p is a random surface
  // and its CWN-amplified push points nowhere useful.
  int pred_det_warmup = 100;
  bool augment = true;  // 90/180/270-degree rotations on training batches
  bool presoftmax_vectors = false;
  DetectorConfig detector;
};

struct EvalConfig {
  double iou_threshold = 0.5;
  double confidence_floor = 0.05;  // candidate threshold when pooling detections
  double nms_threshold = 0.5;
  bool fixed_report = false;  // report at fixed_threshold instead of best F1
  double fixed_threshold = 0.5;
};

struct DatasetBundle {
  std::vector<Scene> source_train;
  std::vector<Scene> target_train;  // unlabeled
  std::vector<Scene> target_test;
  std::vector<Scene> target_labels;
};

// Epoch-shuffled minibatch sampling with optional rotation augmentation
// (each base scene contributes four orientations).
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, bool augment);
  std::vector<Scene> sample(std::span<const Scene> scenes, int n, Rng& rng);

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  bool augment_;
};

// Eq.-style source pretraining: SGD with momentum over shuffled minibatches,
// learning rate decays x0.1 at the configured milestones.
DetectorModel pretrain_source(const TrainConfig& config,
                              std::span<const Scene> source_train);

// One alternation phase: discriminator step on L_pred1, model step on
// L_pred2, with the mode's term selection. The discriminators are freshly
// initialized here; optimizer state starts clean.
class AdaptSession {
 public:
  AdaptSession(DetectorModel& model, const TrainConfig& config,
               std::uint64_t disc_seed);

  // min over D_f, D_p of L_feat_dis [+ (W)L_pred_dis]; model parameters are
  // frozen for the step. Returns the objective value before the update.
  double step_discriminators(std::span<const Scene> source_batch,
                             std::span<const Scene> target_batch);

  // min over M, F of L_source [+ L_feat_ext + alpha (W)L_pred_det];
  // discriminator parameters are frozen for the step.
  double step_model(std::span<const Scene> source_batch,
                    std::span<const Scene> target_batch);

  void set_model_learning_rate(double lr) { model_opt_.set_learning_rate(lr); }
  void set_feature_disc_learning_rate(double lr) {
    disc_f_opt_.set_learning_rate(lr);
  }
  void set_prediction_disc_learning_rate(double lr) {
    disc_p_opt_.set_learning_rate(lr);
  }

  const FeatureDiscriminator& feature_discriminator() const { return d_f_; }
  const PredictionDiscriminator& prediction_discriminator() const { return d_p_; }
  std::vector<Tensor> discriminator_parameters() const;

 private:
  DetectorModel& model_;
  TrainConfig config_;
  int model_steps_ = 0;
  FeatureDiscriminator d_f_;
  PredictionDiscriminator d_p_;
  SgdMomentum model_opt_;
  SgdMomentum disc_f_opt_;
  SgdMomentum disc_p_opt_;
};

// The alternated objectives over da_iters iterations; a no-op for
// without_da. reference draws its target batches from target_labels and
// runs no discriminator step.
void adapt(DetectorModel& model, const TrainConfig& config,
           const DatasetBundle& data);

// Pools detections over the test set and reports AP plus the best-F1
// operating point. A model that emits nothing scores zero.
MetricsReport evaluate_model(const DetectorModel& model,
                             std::span<const Scene> test_scenes,
                             const EvalConfig& eval);

struct RunResult {
  TrainMode mode = TrainMode::without_da;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  std::string checkpoint;  // file path; empty when checkpoints are disabled
};

struct ModeStats {
  TrainMode mode = TrainMode::without_da;
  AggregateStats ap, f1, precision, recall, far;
};

struct ExperimentOutcome {
  std::vector<RunResult> runs;   // grouped by mode in input order, seeds ascending
  std::vector<ModeStats> stats;  // one per mode in input order
};

// Runs every mode for seeds base+0 .. base+R-1. Run i is a pure function of
// its seed: pretraining is shared across modes within a seed (it does not
// depend on the mode), then each mode adapts its own copy. Seeds execute in
// parallel on up to `threads` workers (0 picks the hardware count) and share
// only the immutable dataset bundle.
ExperimentOutcome run_experiment(const std::vector<TrainConfig>& mode_configs,
                                 int repetitions, const DatasetBundle& data,
                                 const EvalConfig& eval,
                                 const std::filesystem::path& checkpoint_dir,
                                 int threads = 0);

// Deep parameter snapshot/restore in full precision (checkpoints quantize
// to f32; experiment internals must stay exact).
std::vector<NamedTensor> snapshot_parameters(const DetectorModel& model);
void restore_snapshot(DetectorModel& model,
                      std::span<const NamedTensor> snapshot);

}  // namespace paln

#endif  // PALN_TRAIN_HPP_
