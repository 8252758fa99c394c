#ifndef PALN_AUTODIFF_HPP_
#define PALN_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "paln/tensor.hpp"

namespace paln {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before every log so
// the adversarial objectives stay finite when a discriminator saturates.
inline constexpr double kProbEps = 1e-7;

// Records executed operations and replays them in reverse for gradients.
// The record is append-only, so reverse traversal visits consumers before
// producers. A tape is single-use: backward() twice without a new forward
// is rejected. Construct with grad_enabled=false for pure inference.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Cross-correlation with zero padding. kernel [K,C,kh,kw] over input
  // [N,C,H,W]; output [N,K,H',W'] with H' = (H + 2*pad - kh)/stride + 1.
  Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                int stride, int pad);

  // Affine map of rows: input [N,D] * weight [D,E] + bias [E].
  Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  // Softmax over the last axis, stabilized by max subtraction.
  Tensor softmax(const Tensor& x);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor sum(const Tensor& a);

  // Sum over components of 0.5*x^2 (|x|<1) else |x|-0.5.
  Tensor smooth_l1_sum(const Tensor& x);

  // Mean over elements of -t*log(p) - (1-t)*log(1-p), probabilities clamped.
  // The weighted form multiplies each element's term by weights[i] before
  // the mean; weights are constants and carry no gradient.
  Tensor bce_mean(const Tensor& p, double target);
  Tensor bce_mean(const Tensor& p, double target, std::span<const double> weights);

  // Sum over rows of -log(probs[row, labels[row]]), probabilities clamped.
  // probs may be [C] with one label or [M,C] with M labels.
  Tensor cross_entropy_sum(const Tensor& probs, std::span<const int> labels);

  // Head maps to per-box rows: [N, G*K, H, W] -> [N*H*W*G, K] with rows in
  // raster order and groups (box templates) inner-most.
  Tensor rows_from_maps(const Tensor& maps, int groups, int k);

  Tensor gather_rows(const Tensor& matrix, std::span<const int> rows);
  Tensor concat_cols(const Tensor& a, const Tensor& b);

  // Reverse pass from a scalar loss. Gradients accumulate into every
  // requires_grad leaf on a path to the loss; other leaves keep zero grad.
  void backward(const Tensor& loss);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t op_count() const { return records_.size(); }

 private:
  struct Record {
    std::function<void()> backprop;
    Tensor out;
  };

  Tensor make_output(std::vector<int> shape, std::vector<double> values,
                     bool needs_grad);
  void record(Tensor out, std::function<void()> backprop);

  std::vector<Record> records_;
  bool grad_enabled_ = true;
  bool used_ = false;
};

// Compares backward gradients of f against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps) coordinate-wise over the given leaves.
// Returns the max relative error |a - n| / max(1e-6, |a|, |n|).
double grad_check(const std::function<Tensor(Tape&)>& f,
                  std::span<const Tensor> leaves, double eps = 1e-4);

}  // namespace paln

#endif  // PALN_AUTODIFF_HPP_
