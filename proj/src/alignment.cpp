#include "paln/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "paln/detector.hpp"

namespace paln {

Tensor extract_units(const Tensor& feature_map) {
  PALN_CHECK(feature_map.rank() == 3, "expected [C,H,W] feature map, got ",
             feature_map.shape_str());
  const int c = feature_map.dim(0), h = feature_map.dim(1),
            w = feature_map.dim(2);
  Tensor units = Tensor::zeros({h * w, c, 3, 3});
  const double* fv = feature_map.values().data();
  double* uv = units.values().data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int u = y * w + x;
      for (int ci = 0; ci < c; ++ci) {
        for (int ky = -1; ky <= 1; ++ky) {
          const int iy = y + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = -1; kx <= 1; ++kx) {
            const int ix = x + kx;
            if (ix < 0 || ix >= w) continue;
            uv[((u * c + ci) * 3 + (ky + 1)) * 3 + (kx + 1)] =
                fv[(ci * h + iy) * w + ix];
          }
        }
      }
    }
  }
  return units;
}

FeatureDiscriminator::FeatureDiscriminator(int in_channels, Rng& rng, int hidden) {
  PALN_CHECK(in_channels >= 1 && hidden >= 1, "bad discriminator widths");
  k1_ = glorot_uniform({hidden, in_channels, 3, 3}, in_channels * 9, hidden * 9, rng);
  b1_ = Tensor::zeros({hidden}, true);
  k2_ = glorot_uniform({hidden, hidden, 1, 1}, hidden, hidden, rng);
  b2_ = Tensor::zeros({hidden}, true);
  k3_ = glorot_uniform({1, hidden, 1, 1}, hidden, 1, rng);
  b3_ = Tensor::zeros({1}, true);
}

Tensor FeatureDiscriminator::forward(Tape& tape, const Tensor& feature_map,
                                     bool frozen) const {
  PALN_CHECK(feature_map.rank() == 4, "expected [B,C,H,W] feature map, got ",
             feature_map.shape_str());
  auto p = [frozen](const Tensor& t) { return frozen ? t.detached() : t; };
  Tensor x = tape.relu(tape.conv2d(feature_map, p(k1_), p(b1_), 1, 1));
  x = tape.relu(tape.conv2d(x, p(k2_), p(b2_), 1, 0));
  return tape.sigmoid(tape.conv2d(x, p(k3_), p(b3_), 1, 0));
}

std::vector<Tensor> FeatureDiscriminator::parameters() const {
  return {k1_, b1_, k2_, b2_, k3_, b3_};
}

std::vector<NamedTensor> FeatureDiscriminator::named_parameters() const {
  return {{"d_f.conv1.kernel", k1_}, {"d_f.conv1.bias", b1_},
          {"d_f.conv2.kernel", k2_}, {"d_f.conv2.bias", b2_},
          {"d_f.conv3.kernel", k3_}, {"d_f.conv3.bias", b3_}};
}

PredictionDiscriminator::PredictionDiscriminator(int vector_length, Rng& rng,
                                                 int hidden) {
  PALN_CHECK(vector_length >= 1 && hidden >= 1, "bad discriminator widths");
  w1_ = glorot_uniform({vector_length, hidden}, vector_length, hidden, rng);
  b1_ = Tensor::zeros({hidden}, true);
  w2_ = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  b2_ = Tensor::zeros({hidden}, true);
  w3_ = glorot_uniform({hidden, 1}, hidden, 1, rng);
  b3_ = Tensor::zeros({1}, true);
}

Tensor PredictionDiscriminator::forward(Tape& tape, const Tensor& vectors,
                                        bool frozen) const {
  PALN_CHECK(vectors.rank() == 2 && vectors.dim(1) == w1_.dim(0),
             "expected [N,", w1_.dim(0), "] prediction vectors, got ",
             vectors.shape_str());
  auto p = [frozen](const Tensor& t) { return frozen ? t.detached() : t; };
  Tensor x = tape.relu(tape.dense(vectors, p(w1_), p(b1_)));
  x = tape.relu(tape.dense(x, p(w2_), p(b2_)));
  return tape.sigmoid(tape.dense(x, p(w3_), p(b3_)));
}

std::vector<Tensor> PredictionDiscriminator::parameters() const {
  return {w1_, b1_, w2_, b2_, w3_, b3_};
}

std::vector<NamedTensor> PredictionDiscriminator::named_parameters() const {
  return {{"d_p.fc1.weight", w1_}, {"d_p.fc1.bias", b1_},
          {"d_p.fc2.weight", w2_}, {"d_p.fc2.bias", b2_},
          {"d_p.fc3.weight", w3_}, {"d_p.fc3.bias", b3_}};
}

AdversarialPair feature_alignment_losses(Tape& tape, const Tensor& source_map,
                                         const Tensor& target_map,
                                         const FeatureDiscriminator& d_f) {
  AdversarialPair out;
  Tensor p_src = d_f.forward(tape, source_map.detached());
  Tensor p_tgt = d_f.forward(tape, target_map.detached());
  out.discriminator_loss =
      tape.add(tape.bce_mean(p_src, 1.0), tape.bce_mean(p_tgt, 0.0));
  Tensor p_tgt_live = d_f.forward(tape, target_map, /*frozen=*/true);
  out.alignment_loss = tape.bce_mean(p_tgt_live, 1.0);
  return out;
}

Tensor build_prediction_vectors(Tape& tape, const Tensor& loc_rows,
                                const Tensor& conf_rows, bool presoftmax) {
  PALN_CHECK(loc_rows.rank() == 2 && conf_rows.rank() == 2 &&
                 loc_rows.dim(0) == conf_rows.dim(0),
             "offset and confidence row counts differ: ", loc_rows.shape_str(),
             " vs ", conf_rows.shape_str());
  Tensor conf = presoftmax ? conf_rows : tape.softmax(conf_rows);
  return tape.concat_cols(loc_rows, conf);
}

AdversarialPair prediction_alignment_losses(Tape& tape,
                                            const Tensor& source_vectors,
                                            const Tensor& target_vectors,
                                            const PredictionDiscriminator& d_p) {
  return weighted_prediction_alignment_losses(tape, source_vectors,
                                              target_vectors, d_p, {}, {});
}

AdversarialPair weighted_prediction_alignment_losses(
    Tape& tape, const Tensor& source_vectors, const Tensor& target_vectors,
    const PredictionDiscriminator& d_p, std::span<const double> source_weights,
    std::span<const double> target_weights) {
  AdversarialPair out;
  Tensor p_src = d_p.forward(tape, source_vectors.detached());
  Tensor p_tgt = d_p.forward(tape, target_vectors.detached());
  Tensor dis_src = source_weights.empty()
                       ? tape.bce_mean(p_src, 1.0)
                       : tape.bce_mean(p_src, 1.0, source_weights);
  Tensor dis_tgt = target_weights.empty()
                       ? tape.bce_mean(p_tgt, 0.0)
                       : tape.bce_mean(p_tgt, 0.0, target_weights);
  out.discriminator_loss = tape.add(dis_src, dis_tgt);
  Tensor p_tgt_live = d_p.forward(tape, target_vectors, /*frozen=*/true);
  out.alignment_loss = target_weights.empty()
                           ? tape.bce_mean(p_tgt_live, 1.0)
                           : tape.bce_mean(p_tgt_live, 1.0, target_weights);
  return out;
}

Tensor confidence_blocks(const Tensor& vectors, int num_classes) {
  PALN_CHECK(vectors.rank() == 2 && vectors.dim(1) == 4 + num_classes,
             "expected [N,4+", num_classes, "] vectors, got ",
             vectors.shape_str());
  const int n = vectors.dim(0);
  Tensor out = Tensor::zeros({n, num_classes});
  const double* vv = vectors.values().data();
  double* ov = out.values().data();
  const int stride = 4 + num_classes;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < num_classes; ++c) {
      ov[i * num_classes + c] = vv[i * stride + 4 + c];
    }
  }
  return out;
}

namespace {

int argmax_row(const double* row, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j) {
    if (row[j] > row[best]) best = j;  // ties keep the lower class index
  }
  return best;
}

}  // namespace

std::vector<double> compute_class_weights(const Tensor& confidence_blocks,
                                          std::span<const double> a) {
  PALN_CHECK(confidence_blocks.rank() == 2, "expected [N,C] blocks, got ",
             confidence_blocks.shape_str());
  const int n = confidence_blocks.dim(0);
  const int c = confidence_blocks.dim(1);
  PALN_CHECK(n >= 1, "need at least one prediction");
  PALN_CHECK(static_cast<int>(a.size()) == c, "expected ", c,
             " class hyperparameters, got ", a.size());
  for (double ac : a) PALN_CHECK(ac > 0.0, "class hyperparameter must be positive");
  std::vector<int> counts(c, 0);
  const double* bv = confidence_blocks.values().data();
  for (int i = 0; i < n; ++i) ++counts[argmax_row(bv + i * c, c)];
  std::vector<double> b(c, 0.0);
  for (int j = 0; j < c; ++j) {
    if (counts[j] > 0) {
      b[j] = a[j] * static_cast<double>(n) /
             (static_cast<double>(counts[j]) * static_cast<double>(c));
    }
  }
  return b;
}

std::vector<double> allocate_weights(std::span<const double> b,
                                     const Tensor& confidence_blocks) {
  PALN_CHECK(confidence_blocks.rank() == 2 &&
                 confidence_blocks.dim(1) == static_cast<int>(b.size()),
             "class weight count does not match confidence blocks");
  const int n = confidence_blocks.dim(0);
  const int c = confidence_blocks.dim(1);
  const double* bv = confidence_blocks.values().data();
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = b[argmax_row(bv + i * c, c)];
  return w;
}

}  // namespace paln
