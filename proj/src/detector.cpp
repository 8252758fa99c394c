#include "paln/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace paln {

DefaultBoxSet DefaultBoxSet::generate(int image_side, int feat_h, int feat_w,
                                      std::vector<BoxTemplate> templates) {
  PALN_CHECK(image_side > 0 && feat_h > 0 && feat_w > 0,
             "non-positive default box geometry");
  PALN_CHECK(!templates.empty(), "no box templates");
  for (const BoxTemplate& t : templates) {
    PALN_CHECK(t.size > 0 && t.aspect > 0, "non-positive template");
  }
  DefaultBoxSet set;
  set.image_side_ = image_side;
  set.feat_h_ = feat_h;
  set.feat_w_ = feat_w;
  set.templates_ = std::move(templates);
  set.boxes_.reserve(static_cast<std::size_t>(feat_h) * feat_w *
                     set.templates_.size());
  const double cell_w = static_cast<double>(image_side) / feat_w;
  const double cell_h = static_cast<double>(image_side) / feat_h;
  for (int i = 0; i < feat_h; ++i) {
    for (int j = 0; j < feat_w; ++j) {
      const double cx = (j + 0.5) * cell_w;
      const double cy = (i + 0.5) * cell_h;
      for (const BoxTemplate& t : set.templates_) {
        const double root = std::sqrt(t.aspect);
        set.boxes_.push_back({cx, cy, t.size * root, t.size / root});
      }
    }
  }
  return set;
}

MatchAssignment match_gt_to_defaults(std::span<const GroundTruth> gts,
                                     const DefaultBoxSet& defaults,
                                     double iou_threshold) {
  const int nd = defaults.count();
  const int ng = static_cast<int>(gts.size());
  MatchAssignment out;
  out.gt_index.assign(nd, -1);
  if (ng == 0) return out;

  std::vector<double> overlaps(static_cast<std::size_t>(ng) * nd);
  for (int g = 0; g < ng; ++g) {
    for (int d = 0; d < nd; ++d) {
      overlaps[static_cast<std::size_t>(g) * nd + d] =
          iou(gts[g].box, to_xyxy(defaults.boxes()[d]));
    }
  }

  // Bipartite stage: repeatedly take the strongest remaining (gt, default)
  // pair so every gt ends up with a dedicated best default.
  std::vector<bool> gt_done(ng, false);
  std::vector<bool> def_taken(nd, false);
  for (int round = 0; round < std::min(ng, nd); ++round) {
    int best_g = -1, best_d = -1;
    double best = -1.0;
    for (int g = 0; g < ng; ++g) {
      if (gt_done[g]) continue;
      for (int d = 0; d < nd; ++d) {
        if (def_taken[d]) continue;
        const double ov = overlaps[static_cast<std::size_t>(g) * nd + d];
        if (ov > best) {
          best = ov;
          best_g = g;
          best_d = d;
        }
      }
    }
    if (best_g < 0) break;
    gt_done[best_g] = true;
    def_taken[best_d] = true;
    out.gt_index[best_d] = best_g;
  }

  // Threshold stage: remaining defaults join their best gt when IoU clears
  // the threshold.
  for (int d = 0; d < nd; ++d) {
    if (out.gt_index[d] >= 0) continue;
    int best_g = -1;
    double best = 0.0;
    for (int g = 0; g < ng; ++g) {
      const double ov = overlaps[static_cast<std::size_t>(g) * nd + d];
      if (ov > best) {
        best = ov;
        best_g = g;
      }
    }
    if (best >= iou_threshold && best_g >= 0) out.gt_index[d] = best_g;
  }
  out.positives = static_cast<int>(
      std::count_if(out.gt_index.begin(), out.gt_index.end(),
                    [](int g) { return g >= 0; }));
  return out;
}

std::vector<bool> hard_negative_mining(std::span<const double> conf_losses,
                                       const std::vector<bool>& positive_mask,
                                       int ratio) {
  PALN_CHECK(conf_losses.size() == positive_mask.size(),
             "loss/mask size mismatch");
  PALN_CHECK(ratio >= 0, "negative ratio must be non-negative");
  const int n = static_cast<int>(conf_losses.size());
  int positives = 0;
  std::vector<int> negatives;
  for (int i = 0; i < n; ++i) {
    PALN_CHECK(std::isfinite(conf_losses[i]), "non-finite confidence loss");
    if (positive_mask[i]) {
      ++positives;
    } else {
      negatives.push_back(i);
    }
  }
  std::stable_sort(negatives.begin(), negatives.end(), [&](int a, int b) {
    return conf_losses[a] > conf_losses[b];
  });
  const int keep = std::min(static_cast<int>(negatives.size()),
                            ratio * positives);
  std::vector<bool> selected(n, false);
  for (int i = 0; i < keep; ++i) selected[negatives[i]] = true;
  return selected;
}

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

DetectorModel::DetectorModel(const DetectorConfig& config, Rng& rng)
    : config_(config) {
  PALN_CHECK(config_.image_side >= 8, "image side too small");
  PALN_CHECK(!config_.channels.empty(), "backbone needs at least one block");
  PALN_CHECK(config_.num_classes >= 2, "need background plus one class");

  int in_c = config_.in_channels;
  int side = config_.image_side;
  for (int out_c : config_.channels) {
    ConvLayer layer;
    layer.kernel =
        glorot_uniform({out_c, in_c, 3, 3}, in_c * 9, out_c * 9, rng);
    layer.bias = Tensor::zeros({out_c}, true);
    backbone_.push_back(layer);
    in_c = out_c;
    side = (side + 2 - 3) / 2 + 1;  // stride-2, pad-1 blocks
    PALN_CHECK(side >= 1, "backbone downsamples the image away");
  }

  const int a = static_cast<int>(config_.templates.size());
  const int feat_c = config_.channels.back();
  auto make_head = [&](Rng& r) {
    Head h;
    h.loc.kernel = glorot_uniform({4 * a, feat_c, 3, 3}, feat_c * 9,
                                  4 * a * 9, r);
    h.loc.bias = Tensor::zeros({4 * a}, true);
    h.conf.kernel = glorot_uniform({config_.num_classes * a, feat_c, 3, 3},
                                   feat_c * 9, config_.num_classes * a * 9, r);
    h.conf.bias = Tensor::zeros({config_.num_classes * a}, true);
    return h;
  };
  head_ = make_head(rng);
  if (config_.separate_heads) target_head_ = make_head(rng);

  default_boxes_ =
      DefaultBoxSet::generate(config_.image_side, side, side, config_.templates);
}

DetectorForward DetectorModel::forward(Tape& tape, const Tensor& images,
                                       HeadDomain domain) const {
  PALN_CHECK(images.rank() == 4, "expected [B,C,S,S] images, got ",
             images.shape_str());
  PALN_CHECK(images.dim(1) == config_.in_channels &&
                 images.dim(2) == config_.image_side &&
                 images.dim(3) == config_.image_side,
             "image size mismatch: got ", images.shape_str(), ", configured side ",
             config_.image_side);
  Tensor x = images;
  for (const ConvLayer& layer : backbone_) {
    x = tape.relu(tape.conv2d(x, layer.kernel, layer.bias, 2, 1));
  }
  const Head& head = (config_.separate_heads && domain == HeadDomain::target)
                         ? target_head_
                         : head_;
  Tensor loc_map = tape.conv2d(x, head.loc.kernel, head.loc.bias, 1, 1);
  Tensor conf_map = tape.conv2d(x, head.conf.kernel, head.conf.bias, 1, 1);
  const int a = static_cast<int>(config_.templates.size());
  DetectorForward out;
  out.feature = x;
  out.loc_rows = tape.rows_from_maps(loc_map, a, 4);
  out.conf_rows = tape.rows_from_maps(conf_map, a, config_.num_classes);
  return out;
}

std::vector<Tensor> DetectorModel::parameters() const {
  std::vector<Tensor> out;
  for (const NamedTensor& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::vector<NamedTensor> DetectorModel::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < backbone_.size(); ++i) {
    const std::string base = "backbone." + std::to_string(i);
    out.push_back({base + ".kernel", backbone_[i].kernel});
    out.push_back({base + ".bias", backbone_[i].bias});
  }
  auto add_head = [&out](const std::string& base, const Head& h) {
    out.push_back({base + ".loc.kernel", h.loc.kernel});
    out.push_back({base + ".loc.bias", h.loc.bias});
    out.push_back({base + ".conf.kernel", h.conf.kernel});
    out.push_back({base + ".conf.bias", h.conf.bias});
  };
  add_head("head", head_);
  if (config_.separate_heads) add_head("target_head", target_head_);
  return out;
}

Tensor ssd_loss(Tape& tape, const Tensor& loc_rows, const Tensor& conf_rows,
                std::span<const GroundTruth> gts, const DefaultBoxSet& defaults,
                const SsdLossOptions& options) {
  const int nd = defaults.count();
  PALN_CHECK(loc_rows.rank() == 2 && loc_rows.dim(0) == nd &&
                 loc_rows.dim(1) == 4,
             "loc rows ", loc_rows.shape_str(), " do not match ", nd,
             " default boxes");
  PALN_CHECK(conf_rows.rank() == 2 && conf_rows.dim(0) == nd,
             "conf rows ", conf_rows.shape_str(), " do not match ", nd,
             " default boxes");
  const int num_classes = conf_rows.dim(1);
  for (const GroundTruth& gt : gts) {
    PALN_CHECK(gt.label >= 1 && gt.label < num_classes, "gt label ", gt.label,
               " outside [1,", num_classes, ")");
  }
  if (gts.empty()) return Tensor::scalar(0.0);

  const MatchAssignment match =
      match_gt_to_defaults(gts, defaults, options.match_iou);
  if (match.positives == 0) return Tensor::scalar(0.0);

  // Mining scores: per-box cross entropy against the assigned label
  // (background for non-positives), from current values only.
  std::vector<double> conf_loss(nd, 0.0);
  std::vector<bool> positive_mask(nd, false);
  {
    const double* cv = conf_rows.values().data();
    for (int d = 0; d < nd; ++d) {
      positive_mask[d] = match.is_positive(d);
      const int label = positive_mask[d] ? gts[match.gt_index[d]].label : 0;
      const double* row = cv + static_cast<std::int64_t>(d) * num_classes;
      double mx = row[0];
      for (int j = 1; j < num_classes; ++j) mx = std::max(mx, row[j]);
      double denom = 0.0;
      for (int j = 0; j < num_classes; ++j) denom += std::exp(row[j] - mx);
      conf_loss[d] = -(row[label] - mx - std::log(denom));
    }
  }
  const std::vector<bool> negative_mask =
      hard_negative_mining(conf_loss, positive_mask, options.negative_ratio);

  std::vector<int> pos_rows;
  std::vector<double> loc_targets;
  std::vector<int> conf_sel_rows;
  std::vector<int> conf_labels;
  for (int d = 0; d < nd; ++d) {
    if (positive_mask[d]) {
      pos_rows.push_back(d);
      const GroundTruth& gt = gts[match.gt_index[d]];
      const BoxOffsets enc =
          encode_box(to_cxcywh(gt.box), defaults.boxes()[d]);
      loc_targets.insert(loc_targets.end(), {enc.dcx, enc.dcy, enc.dw, enc.dh});
      conf_sel_rows.push_back(d);
      conf_labels.push_back(gt.label);
    }
  }
  for (int d = 0; d < nd; ++d) {
    if (negative_mask[d]) {
      conf_sel_rows.push_back(d);
      conf_labels.push_back(0);
    }
  }

  Tensor pred_offsets = tape.gather_rows(loc_rows, pos_rows);
  Tensor target_offsets = Tensor::from(
      {static_cast<int>(pos_rows.size()), 4}, std::move(loc_targets));
  Tensor loc_term =
      tape.smooth_l1_sum(tape.sub(pred_offsets, target_offsets));

  Tensor sel_logits = tape.gather_rows(conf_rows, conf_sel_rows);
  Tensor conf_term =
      tape.cross_entropy_sum(tape.softmax(sel_logits), conf_labels);

  return tape.scale(tape.add(loc_term, conf_term),
                    1.0 / static_cast<double>(match.positives));
}

DetectorForward forward_detect(const DetectorModel& model, Tape& tape,
                               const Tensor& image) {
  PALN_CHECK(image.rank() == 3, "expected [C,S,S] image, got ",
             image.shape_str());
  Tensor batch = Tensor::from(
      {1, image.dim(0), image.dim(1), image.dim(2)},
      std::vector<double>(image.values().begin(), image.values().end()));
  return model.forward(tape, batch);
}

std::vector<Detection> infer(const DetectorModel& model, const Tensor& image,
                             double confidence_threshold,
                             double nms_threshold) {
  PALN_CHECK(confidence_threshold >= 0.0 && confidence_threshold <= 1.0 &&
                 nms_threshold >= 0.0 && nms_threshold <= 1.0,
             "thresholds must be in [0,1]");
  Tape tape(false);
  DetectorForward fwd = forward_detect(model, tape, image);
  Tensor probs = tape.softmax(fwd.conf_rows);
  const DefaultBoxSet& defaults = model.default_boxes();
  const int nd = defaults.count();
  const int num_classes = model.config().num_classes;
  const double side = model.config().image_side;
  const double* pv = probs.values().data();
  const double* lv = fwd.loc_rows.values().data();

  std::vector<Detection> out;
  for (int cls = 1; cls < num_classes; ++cls) {
    std::vector<Detection> candidates;
    for (int d = 0; d < nd; ++d) {
      const double score = pv[static_cast<std::int64_t>(d) * num_classes + cls];
      if (score < confidence_threshold) continue;
      const BoxOffsets off = {lv[d * 4 + 0], lv[d * 4 + 1], lv[d * 4 + 2],
                              lv[d * 4 + 3]};
      BoxXYXY box = to_xyxy(decode_box(off, defaults.boxes()[d]));
      box.x1 = std::clamp(box.x1, 0.0, side);
      box.y1 = std::clamp(box.y1, 0.0, side);
      box.x2 = std::clamp(box.x2, 0.0, side);
      box.y2 = std::clamp(box.y2, 0.0, side);
      candidates.push_back({box, score, cls});
    }
    std::vector<Detection> kept = nms(std::move(candidates), nms_threshold);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

}  // namespace paln
