#ifndef PALN_DETECTOR_HPP_
#define PALN_DETECTOR_HPP_

#include <span>
#include <vector>

#include "paln/autodiff.hpp"
#include "paln/geometry.hpp"
#include "paln/rng.hpp"
#include "paln/tensor.hpp"

namespace paln {

struct BoxTemplate {
  double size = 0;    // pixels
  double aspect = 1;  // w / h
};

// Anchor geometry: one box per (cell, template), centers at cell midpoints.
class DefaultBoxSet {
 public:
  static DefaultBoxSet generate(int image_side, int feat_h, int feat_w,
                                std::vector<BoxTemplate> templates);

  int count() const { return static_cast<int>(boxes_.size()); }
  const std::vector<BoxCXCYWH>& boxes() const { return boxes_; }
  int image_side() const { return image_side_; }
  int feat_h() const { return feat_h_; }
  int feat_w() const { return feat_w_; }
  int templates_per_cell() const { return static_cast<int>(templates_.size()); }
  const std::vector<BoxTemplate>& templates() const { return templates_; }

 private:
  std::vector<BoxCXCYWH> boxes_;
  std::vector<BoxTemplate> templates_;
  int image_side_ = 0, feat_h_ = 0, feat_w_ = 0;
};

struct MatchAssignment {
  // Per default box: index into the ground-truth list, or -1 for background.
  std::vector<int> gt_index;
  int positives = 0;
  bool is_positive(int i) const { return gt_index[i] >= 0; }
};

// SSD matching: every gt grabs its best-IoU default (greedy bipartite, so
// two gts never share the forced default), then any remaining default with
// IoU >= threshold joins its best gt. Ties resolve to the lower gt index,
// then the lower default index.
MatchAssignment match_gt_to_defaults(std::span<const GroundTruth> gts,
                                     const DefaultBoxSet& defaults,
                                     double iou_threshold = 0.5);

// Picks the min(ratio * positives, available) negatives with the largest
// confidence loss; ties by lower index. Returns a per-box negative mask.
std::vector<bool> hard_negative_mining(std::span<const double> conf_losses,
                                       const std::vector<bool>& positive_mask,
                                       int ratio = 3);

struct DetectorConfig {
  int image_side = 64;
  int in_channels = 3;
  int num_classes = 2;  // class 0 is background
  std::vector<int> channels = {16, 32, 32};  // stride-2 conv blocks
  std::vector<BoxTemplate> templates = {{8.0, 1.0}, {14.0, 1.0}};
  bool separate_heads = false;  // ablation: per-domain heads
};

enum class HeadDomain { source, target };

struct DetectorForward {
  Tensor feature;    // [B, C_feat, Hf, Wf], shallow map used for alignment
  Tensor loc_rows;   // [B*N, 4] box offsets, default-box order
  Tensor conf_rows;  // [B*N, C] class logits
};

// Shared feature extractor plus detection head (location regressor and
// classifier as 3x3 conv heads). One parameter set serves both domains
// unless separate_heads is set.
class DetectorModel {
 public:
  DetectorModel(const DetectorConfig& config, Rng& rng);

  DetectorForward forward(Tape& tape, const Tensor& images,
                          HeadDomain domain = HeadDomain::source) const;

  const DetectorConfig& config() const { return config_; }
  const DefaultBoxSet& default_boxes() const { return default_boxes_; }
  int feat_channels() const { return config_.channels.back(); }

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters() const;

 private:
  struct ConvLayer {
    Tensor kernel;
    Tensor bias;
  };
  struct Head {
    ConvLayer loc;
    ConvLayer conf;
  };

  DetectorConfig config_;
  std::vector<ConvLayer> backbone_;
  Head head_;
  Head target_head_;  // used only when separate_heads
  DefaultBoxSet default_boxes_;
};

struct SsdLossOptions {
  double match_iou = 0.5;
  int negative_ratio = 3;
};

// Per-image SSD training loss: smooth L1 on positive offsets plus cross
// entropy over positives and mined negatives, divided by the positive count.
// Zero when the image has no ground truth.
Tensor ssd_loss(Tape& tape, const Tensor& loc_rows, const Tensor& conf_rows,
                std::span<const GroundTruth> gts, const DefaultBoxSet& defaults,
                const SsdLossOptions& options = {});

// Single-image forward: wraps batch forward with B = 1.
DetectorForward forward_detect(const DetectorModel& model, Tape& tape,
                               const Tensor& image);

// Softmax confidences, per-class thresholding, decode, clip, and NMS.
std::vector<Detection> infer(const DetectorModel& model, const Tensor& image,
                             double confidence_threshold, double nms_threshold);

// Conv weight init: uniform +-sqrt(6 / (fan_in + fan_out)), zero biases.
Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

}  // namespace paln

#endif  // PALN_DETECTOR_HPP_
