#include "paln/optim.hpp"

#include <cmath>

namespace paln {

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double learning_rate,
                         double momentum)
    : params_(std::move(params)), lr_(learning_rate), momentum_(momentum) {
  PALN_CHECK(lr_ > 0.0, "learning rate must be positive, got ", lr_);
  PALN_CHECK(momentum_ >= 0.0 && momentum_ < 1.0, "momentum must be in [0,1), got ",
             momentum_);
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.push_back(Tensor::zeros(p.shape()));
}

void SgdMomentum::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i];
    sgd_momentum_step(p.values(), p.grad(), velocity_[i].values(), lr_, momentum_);
  }
}

void SgdMomentum::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void SgdMomentum::set_learning_rate(double lr) {
  PALN_CHECK(lr > 0.0, "learning rate must be positive, got ", lr);
  lr_ = lr;
}

void sgd_momentum_step(std::span<double> param, std::span<const double> grad,
                       std::span<double> velocity, double lr, double momentum) {
  PALN_CHECK(param.size() == grad.size() && param.size() == velocity.size(),
             "parameter/gradient/velocity size mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double v = momentum * velocity[i] + grad[i];
    PALN_CHECK(std::isfinite(v), "non-finite update at coordinate ", i);
    velocity[i] = v;
    param[i] -= lr * v;
  }
}

}  // namespace paln
