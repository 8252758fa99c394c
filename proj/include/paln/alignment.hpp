#ifndef PALN_ALIGNMENT_HPP_
#define PALN_ALIGNMENT_HPP_

#include <span>
#include <vector>

#include "paln/autodiff.hpp"
#include "paln/rng.hpp"
#include "paln/tensor.hpp"

namespace paln {

// One zero-padded 3x3 patch per feature-map cell: [U, C, 3, 3] with
// U = Hf * Wf. This is the unit the feature discriminator scores; its conv
// stack has exactly this receptive field.
Tensor extract_units(const Tensor& feature_map);

// Per-cell domain probability from a feature map. conv 3x3 (C->32) + relu,
// conv 1x1 (32->32) + relu, conv 1x1 (32->1) + sigmoid.
class FeatureDiscriminator {
 public:
  FeatureDiscriminator(int in_channels, Rng& rng, int hidden = 32);

  // frozen: parameters enter the tape detached, so the loss trains only the
  // upstream network.
  Tensor forward(Tape& tape, const Tensor& feature_map, bool frozen = false) const;

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters() const;

 private:
  Tensor k1_, b1_, k2_, b2_, k3_, b3_;
};

// Per-vector domain probability. dense (4+C)->32 + relu, 32->32 + relu,
// 32->1 + sigmoid.
class PredictionDiscriminator {
 public:
  PredictionDiscriminator(int vector_length, Rng& rng, int hidden = 32);

  Tensor forward(Tape& tape, const Tensor& vectors, bool frozen = false) const;

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters() const;

 private:
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

struct AdversarialPair {
  Tensor discriminator_loss;  // trains the discriminator (inputs detached)
  Tensor alignment_loss;      // trains the upstream network (D frozen)
};

// Source units labeled 1, target 0.
//   discriminator_loss = -mean_src[log D(u)] - mean_tgt[log(1 - D(u))]
//   alignment_loss     = -mean_tgt[log D(u)]        (inverted label form)
AdversarialPair feature_alignment_losses(Tape& tape, const Tensor& source_map,
                                         const Tensor& target_map,
                                         const FeatureDiscriminator& d_f);

// Concatenates per-box offsets with class confidences: [N, 4+C] rows of
// (dcx, dcy, dw, dh, p_0, ..., p_{C-1}). Confidences pass through softmax
// unless presoftmax is set (then raw logits are used).
Tensor build_prediction_vectors(Tape& tape, const Tensor& loc_rows,
                                const Tensor& conf_rows, bool presoftmax = false);

AdversarialPair prediction_alignment_losses(Tape& tape,
                                            const Tensor& source_vectors,
                                            const Tensor& target_vectors,
                                            const PredictionDiscriminator& d_p);

// Same losses with per-prediction weights applied to each log term before
// averaging; weights come from the matching domain batch and are constants.
AdversarialPair weighted_prediction_alignment_losses(
    Tape& tape, const Tensor& source_vectors, const Tensor& target_vectors,
    const PredictionDiscriminator& d_p, std::span<const double> source_weights,
    std::span<const double> target_weights);

// Class weight normalization. Classes are counted by the argmax of each
// confidence block (ties to the lower class index):
//   b_c = a_c * N / (n_c * C) when n_c > 0, else 0.
// Weights carry no gradient; they are recomputed from values each batch.
std::vector<double> compute_class_weights(const Tensor& confidence_blocks,
                                          std::span<const double> a);

// w_i = b_{argmax P_i}.
std::vector<double> allocate_weights(std::span<const double> b,
                                     const Tensor& confidence_blocks);

// The [N, C] confidence block of a [N, 4+C] prediction-vector batch
// (values only; no gradient path).
Tensor confidence_blocks(const Tensor& vectors, int num_classes);

}  // namespace paln

#endif  // PALN_ALIGNMENT_HPP_
