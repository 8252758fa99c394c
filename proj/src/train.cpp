#include "paln/train.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <thread>

#include "paln/checkpoint.hpp"

namespace paln {
namespace {

// Independent seed streams per phase so each stage is reproducible on its own.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPretrainStream = 2;
constexpr std::uint64_t kAdaptStream = 3;
constexpr std::uint64_t kDiscStream = 4;

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::without_da: return "without_da";
    case TrainMode::plain_adv: return "plain_adv";
    case TrainMode::without_norm: return "without_norm";
    case TrainMode::norm_d_and_p: return "norm_d_and_p";
    case TrainMode::norm_p: return "norm_p";
    case TrainMode::reference: return "reference";
  }
  return "unknown";
}

std::optional<TrainMode> train_mode_from_string(const std::string& name) {
  for (TrainMode mode : {TrainMode::without_da, TrainMode::plain_adv,
                         TrainMode::without_norm, TrainMode::norm_d_and_p,
                         TrainMode::norm_p, TrainMode::reference}) {
    if (to_string(mode) == name) return mode;
  }
  return std::nullopt;
}

double default_alpha(TrainMode mode) {
  return mode == TrainMode::norm_d_and_p ? 0.1 : 1.0;
}

std::vector<double> default_class_hyper(TrainMode mode) {
  if (mode == TrainMode::norm_p) return {3.0, 1.0};
  return {1.0, 1.0};
}

BatchSampler::BatchSampler(std::size_t dataset_size, bool augment)
    : augment_(augment) {
  PALN_CHECK(dataset_size > 0, "empty dataset");
  order_.resize(dataset_size * (augment ? 4 : 1));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();  // first sample() shuffles
}

std::vector<Scene> BatchSampler::sample(std::span<const Scene> scenes, int n,
                                        Rng& rng) {
  PALN_CHECK(scenes.size() * (augment_ ? 4 : 1) == order_.size(),
             "sampler bound to a different dataset size");
  std::vector<Scene> batch;
  batch.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (cursor_ >= order_.size()) {
      for (std::size_t j = order_.size(); j > 1; --j) {
        const std::size_t k =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j) - 1));
        std::swap(order_[j - 1], order_[k]);
      }
      cursor_ = 0;
    }
    const std::size_t e = order_[cursor_++];
    if (augment_) {
      const Scene& base = scenes[e >> 2];
      const int rot = static_cast<int>(e & 3);
      batch.push_back(rot == 0 ? base : rotate_augment(base, 90 * rot));
    } else {
      batch.push_back(scenes[e]);
    }
  }
  return batch;
}

namespace {

Tensor stack_images(std::span<const Scene> scenes) {
  PALN_CHECK(!scenes.empty(), "empty batch");
  const auto& shape = scenes[0].image.shape();
  const std::int64_t per = scenes[0].image.size();
  std::vector<double> values(static_cast<std::size_t>(per) * scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    PALN_CHECK(scenes[i].image.shape() == shape, "mixed image shapes in batch");
    std::copy(scenes[i].image.values().begin(), scenes[i].image.values().end(),
              values.begin() + static_cast<std::int64_t>(i) * per);
  }
  return Tensor::from({static_cast<int>(scenes.size()), shape[0], shape[1], shape[2]},
                      std::move(values));
}

// Mean per-image SSD loss over the batch rows of one forward pass.
Tensor batch_ssd_loss(Tape& tape, const DetectorForward& fwd,
                      std::span<const Scene> scenes,
                      const DefaultBoxSet& defaults) {
  const int nd = defaults.count();
  Tensor total;
  for (std::size_t b = 0; b < scenes.size(); ++b) {
    std::vector<int> rows(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) rows[static_cast<std::size_t>(d)] = static_cast<int>(b) * nd + d;
    Tensor loc = tape.gather_rows(fwd.loc_rows, rows);
    Tensor conf = tape.gather_rows(fwd.conf_rows, rows);
    Tensor loss = ssd_loss(tape, loc, conf, scenes[b].visible_boxes(), defaults);
    total = b == 0 ? loss : tape.add(total, loss);
  }
  return tape.scale(total, 1.0 / static_cast<double>(scenes.size()));
}

}  // namespace

DetectorModel pretrain_source(const TrainConfig& config,
                              std::span<const Scene> source_train) {
  PALN_CHECK(config.batch_source >= 1, "batch size must be >= 1");
  Rng init_rng(derive_seed(config.seed, kInitStream));
  DetectorModel model(config.detector, init_rng);
  SgdMomentum opt(model.parameters(), config.lr_model, config.momentum);
  Rng rng(derive_seed(config.seed, kPretrainStream));
  BatchSampler sampler(source_train.size(), config.augment);
  double lr = config.lr_model;
  for (int iter = 0; iter < config.pretrain_iters; ++iter) {
    if (std::find(config.decay_milestones.begin(), config.decay_milestones.end(),
                  iter) != config.decay_milestones.end()) {
      lr *= 0.1;
      opt.set_learning_rate(lr);
    }
    try {
      const std::vector<Scene> batch =
          sampler.sample(source_train, config.batch_source, rng);
      Tape tape;
      const DetectorForward fwd = model.forward(tape, stack_images(batch));
      const Tensor loss =
          batch_ssd_loss(tape, fwd, batch, model.default_boxes());
      PALN_CHECK(std::isfinite(loss.item()), "non-finite loss");
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    } catch (const std::exception& e) {
      throw std::runtime_error("pretraining aborted at iteration " +
                               std::to_string(iter) + ": " + e.what());
    }
  }
  return model;
}

AdaptSession::AdaptSession(DetectorModel& model, const TrainConfig& config,
                           std::uint64_t disc_seed)
    : model_(model),
      config_(config),
      d_f_([&] {
        Rng rng(derive_seed(disc_seed, 1));
        return FeatureDiscriminator(model.feat_channels(), rng);
      }()),
      d_p_([&] {
        Rng rng(derive_seed(disc_seed, 2));
        return PredictionDiscriminator(4 + model.config().num_classes, rng);
      }()),
      model_opt_(model.parameters(), config.lr_da_model, config.da_momentum),
      disc_f_opt_(d_f_.parameters(), config.lr_disc, config.da_momentum),
      disc_p_opt_(d_p_.parameters(), config.lr_disc_p, config.da_momentum) {
  PALN_CHECK(config_.alpha >= 0.0, "alpha must be non-negative");
}

std::vector<Tensor> AdaptSession::discriminator_parameters() const {
  std::vector<Tensor> params = d_f_.parameters();
  for (const Tensor& t : d_p_.parameters()) params.push_back(t);
  return params;
}

double AdaptSession::step_discriminators(std::span<const Scene> source_batch,
                                         std::span<const Scene> target_batch) {
  PALN_CHECK(config_.mode != TrainMode::without_da &&
                 config_.mode != TrainMode::reference,
             "no discriminator step in mode ", to_string(config_.mode));
  // Model outputs are constants for this step.
  Tape fwd_tape(false);
  const DetectorForward src =
      model_.forward(fwd_tape, stack_images(source_batch), HeadDomain::source);
  const DetectorForward tgt =
      model_.forward(fwd_tape, stack_images(target_batch), HeadDomain::target);

  Tape tape;
  Tensor loss = tape.add(
      tape.bce_mean(d_f_.forward(tape, src.feature), 1.0),
      tape.bce_mean(d_f_.forward(tape, tgt.feature), 0.0));
  if (config_.mode != TrainMode::plain_adv) {
    Tensor src_vec = build_prediction_vectors(fwd_tape, src.loc_rows,
                                              src.conf_rows,
                                              config_.presoftmax_vectors);
    Tensor tgt_vec = build_prediction_vectors(fwd_tape, tgt.loc_rows,
                                              tgt.conf_rows,
                                              config_.presoftmax_vectors);
    Tensor p_src = d_p_.forward(tape, src_vec);
    Tensor p_tgt = d_p_.forward(tape, tgt_vec);
    if (config_.mode == TrainMode::norm_d_and_p) {
      const int c = model_.config().num_classes;
      // Per-domain-batch weights on each side's log terms.
      Tape value_tape(false);
      Tensor src_conf = build_prediction_vectors(
          value_tape, src.loc_rows, src.conf_rows, false);
      Tensor tgt_conf = build_prediction_vectors(
          value_tape, tgt.loc_rows, tgt.conf_rows, false);
      const std::vector<double> w_src = allocate_weights(
          compute_class_weights(confidence_blocks(src_conf, c), config_.a),
          confidence_blocks(src_conf, c));
      const std::vector<double> w_tgt = allocate_weights(
          compute_class_weights(confidence_blocks(tgt_conf, c), config_.a),
          confidence_blocks(tgt_conf, c));
      loss = tape.add(loss, tape.add(tape.bce_mean(p_src, 1.0, w_src),
                                     tape.bce_mean(p_tgt, 0.0, w_tgt)));
    } else {
      loss = tape.add(loss, tape.add(tape.bce_mean(p_src, 1.0),
                                     tape.bce_mean(p_tgt, 0.0)));
    }
  }
  const double value = loss.item();
  disc_f_opt_.zero_grad();
  disc_p_opt_.zero_grad();
  tape.backward(loss);
  disc_f_opt_.step();
  disc_p_opt_.step();
  return value;
}

double AdaptSession::step_model(std::span<const Scene> source_batch,
                                std::span<const Scene> target_batch) {
  PALN_CHECK(config_.mode != TrainMode::without_da,
             "no model step in mode without_da");
  Tape tape;
  const DetectorForward src =
      model_.forward(tape, stack_images(source_batch), HeadDomain::source);

  Tensor loss;
  if (config_.mode == TrainMode::reference) {
    // Supervised on both domains, averaged over the mixed batch.
    const DetectorForward tgt =
        model_.forward(tape, stack_images(target_batch), HeadDomain::target);
    Tensor src_sum = tape.scale(
        batch_ssd_loss(tape, src, source_batch, model_.default_boxes()),
        static_cast<double>(source_batch.size()));
    Tensor tgt_sum = tape.scale(
        batch_ssd_loss(tape, tgt, target_batch, model_.default_boxes()),
        static_cast<double>(target_batch.size()));
    loss = tape.scale(tape.add(src_sum, tgt_sum),
                      1.0 / static_cast<double>(source_batch.size() +
                                                target_batch.size()));
  } else {
    loss = batch_ssd_loss(tape, src, source_batch, model_.default_boxes());
    const DetectorForward tgt =
        model_.forward(tape, stack_images(target_batch), HeadDomain::target);
    // Feature alignment pulls target features toward the source label.
    Tensor feat_ext =
        tape.bce_mean(d_f_.forward(tape, tgt.feature, /*frozen=*/true), 1.0);
    loss = tape.add(loss, feat_ext);
    if (config_.mode != TrainMode::plain_adv &&
        model_steps_ >= config_.pred_det_warmup) {
      Tensor tgt_vec = build_prediction_vectors(
          tape, tgt.loc_rows, tgt.conf_rows, config_.presoftmax_vectors);
      Tensor p_tgt = d_p_.forward(tape, tgt_vec, /*frozen=*/true);
      Tensor pred_det;
      if (config_.mode == TrainMode::norm_d_and_p ||
          config_.mode == TrainMode::norm_p) {
        const int c = model_.config().num_classes;
        Tape value_tape(false);
        Tensor conf_vec = build_prediction_vectors(
            value_tape, tgt.loc_rows.detached(), tgt.conf_rows.detached(),
            false);
        const std::vector<double> w_tgt = allocate_weights(
            compute_class_weights(confidence_blocks(conf_vec, c), config_.a),
            confidence_blocks(conf_vec, c));
        pred_det = tape.bce_mean(p_tgt, 1.0, w_tgt);
      } else {
        pred_det = tape.bce_mean(p_tgt, 1.0);
      }
      loss = tape.add(loss, tape.scale(pred_det, config_.alpha));
    }
  }
  const double value = loss.item();
  model_opt_.zero_grad();
  tape.backward(loss);
  model_opt_.step();
  ++model_steps_;
  return value;
}

void adapt(DetectorModel& model, const TrainConfig& config,
           const DatasetBundle& data) {
  if (config.mode == TrainMode::without_da) return;
  PALN_CHECK(config.batch_source >= 1 && config.batch_target >= 1,
             "batch sizes must be >= 1");
  AdaptSession session(model, config, derive_seed(config.seed, kDiscStream));
  Rng rng(derive_seed(config.seed, kAdaptStream));
  std::span<const Scene> target_pool =
      config.mode == TrainMode::reference ? std::span<const Scene>(data.target_labels)
                                          : std::span<const Scene>(data.target_train);
  PALN_CHECK(!target_pool.empty(), "adapt needs target scenes for mode ",
             to_string(config.mode));
  BatchSampler src_sampler(data.source_train.size(), config.augment);
  BatchSampler tgt_sampler(target_pool.size(), config.augment);
  double lr_scale = 1.0;
  for (int iter = 0; iter < config.da_iters; ++iter) {
    if (std::find(config.da_decay_milestones.begin(),
                  config.da_decay_milestones.end(),
                  iter) != config.da_decay_milestones.end()) {
      lr_scale *= 0.1;
      session.set_model_learning_rate(config.lr_da_model * lr_scale);
      session.set_feature_disc_learning_rate(config.lr_disc * lr_scale);
      session.set_prediction_disc_learning_rate(config.lr_disc_p * lr_scale);
    }
    try {
      const std::vector<Scene> src_batch =
          src_sampler.sample(data.source_train, config.batch_source, rng);
      const std::vector<Scene> tgt_batch =
          tgt_sampler.sample(target_pool, config.batch_target, rng);
      if (config.mode != TrainMode::reference) {
        session.step_discriminators(src_batch, tgt_batch);
      }
      session.step_model(src_batch, tgt_batch);
    } catch (const std::exception& e) {
      throw std::runtime_error("adaptation aborted at iteration " +
                               std::to_string(iter) + " in mode " +
                               to_string(config.mode) + ": " + e.what());
    }
  }
}

MetricsReport evaluate_model(const DetectorModel& model,
                             std::span<const Scene> test_scenes,
                             const EvalConfig& eval) {
  std::vector<EvalInstance> instances;
  instances.reserve(test_scenes.size());
  std::size_t total_detections = 0;
  for (const Scene& scene : test_scenes) {
    EvalInstance inst;
    inst.detections =
        infer(model, scene.image, eval.confidence_floor, eval.nms_threshold);
    inst.gts.assign(scene.boxes.begin(), scene.boxes.end());
    total_detections += inst.detections.size();
    instances.push_back(std::move(inst));
  }
  if (total_detections == 0) {
    MetricsReport zero;
    zero.threshold = 1.0;
    return zero;
  }
  if (eval.fixed_report) {
    const PointMetrics m =
        threshold_metrics(instances, eval.fixed_threshold, eval.iou_threshold);
    MetricsReport report;
    report.ap = average_precision(instances, eval.iou_threshold);
    report.f1 = m.f1;
    report.precision = m.precision;
    report.recall = m.recall;
    report.far = m.far;
    report.threshold = eval.fixed_threshold;
    return report;
  }
  return best_f1_operating_point(instances, eval.iou_threshold);
}

std::vector<NamedTensor> snapshot_parameters(const DetectorModel& model) {
  std::vector<NamedTensor> out;
  for (const NamedTensor& nt : model.named_parameters()) {
    out.push_back({nt.name,
                   Tensor::from(nt.tensor.shape(),
                                std::vector<double>(nt.tensor.values().begin(),
                                                    nt.tensor.values().end()))});
  }
  return out;
}

void restore_snapshot(DetectorModel& model,
                      std::span<const NamedTensor> snapshot) {
  std::vector<NamedTensor> params = model.named_parameters();
  restore_parameters(params, snapshot);
}

ExperimentOutcome run_experiment(const std::vector<TrainConfig>& mode_configs,
                                 int repetitions, const DatasetBundle& data,
                                 const EvalConfig& eval,
                                 const std::filesystem::path& checkpoint_dir,
                                 int threads) {
  PALN_CHECK(!mode_configs.empty(), "no modes configured");
  PALN_CHECK(repetitions >= 1, "repetitions must be >= 1");
  const TrainConfig& base = mode_configs[0];
  for (const TrainConfig& cfg : mode_configs) {
    PALN_CHECK(cfg.seed == base.seed && cfg.pretrain_iters == base.pretrain_iters &&
                   cfg.lr_model == base.lr_model && cfg.momentum == base.momentum &&
                   cfg.batch_source == base.batch_source && cfg.augment == base.augment,
               "mode configs must share the pretraining setup");
  }
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  const std::size_t num_modes = mode_configs.size();
  ExperimentOutcome outcome;
  outcome.runs.resize(num_modes * static_cast<std::size_t>(repetitions));

  std::atomic<int> next_seed{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      const int i = next_seed.fetch_add(1);
      if (i >= repetitions) return;
      try {
        TrainConfig pretrain_cfg = base;
        pretrain_cfg.seed = base.seed + static_cast<std::uint64_t>(i);
        const DetectorModel pretrained =
            pretrain_source(pretrain_cfg, data.source_train);
        const std::vector<NamedTensor> snap = snapshot_parameters(pretrained);
        for (std::size_t m = 0; m < num_modes; ++m) {
          TrainConfig cfg = mode_configs[m];
          cfg.seed = pretrain_cfg.seed;
          Rng scratch(0);
          DetectorModel model(cfg.detector, scratch);
          restore_snapshot(model, snap);
          adapt(model, cfg, data);
          RunResult result;
          result.mode = cfg.mode;
          result.seed = cfg.seed;
          result.metrics = evaluate_model(model, data.target_test, eval);
          if (!checkpoint_dir.empty()) {
            const std::filesystem::path path =
                checkpoint_dir / (to_string(cfg.mode) + "_seed" +
                                  std::to_string(cfg.seed) + ".paln");
            const std::vector<NamedTensor> params = model.named_parameters();
            save_checkpoint(path, params);
            result.checkpoint = path.string();
          }
          outcome.runs[m * static_cast<std::size_t>(repetitions) +
                       static_cast<std::size_t>(i)] = std::move(result);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  int worker_count = threads > 0 ? threads
                                 : static_cast<int>(std::thread::hardware_concurrency());
  worker_count = std::max(1, std::min(worker_count, repetitions));
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(worker_count));
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t m = 0; m < num_modes; ++m) {
    std::vector<double> ap, f1, pr, rr, far;
    for (int i = 0; i < repetitions; ++i) {
      const MetricsReport& r =
          outcome.runs[m * static_cast<std::size_t>(repetitions) +
                       static_cast<std::size_t>(i)]
              .metrics;
      ap.push_back(r.ap);
      f1.push_back(r.f1);
      pr.push_back(r.precision);
      rr.push_back(r.recall);
      far.push_back(r.far);
    }
    ModeStats stats;
    stats.mode = mode_configs[m].mode;
    stats.ap = aggregate_stats(ap);
    stats.f1 = aggregate_stats(f1);
    stats.precision = aggregate_stats(pr);
    stats.recall = aggregate_stats(rr);
    stats.far = aggregate_stats(far);
    outcome.stats.push_back(stats);
  }
  return outcome;
}

}  // namespace paln
