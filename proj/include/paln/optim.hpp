#ifndef PALN_OPTIM_HPP_
#define PALN_OPTIM_HPP_

#include <span>
#include <vector>

#include "paln/tensor.hpp"

namespace paln {

// SGD with momentum: v <- mu*v + g; p <- p - lr*v.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, double learning_rate, double momentum);

  void step();
  void zero_grad();

  void set_learning_rate(double lr);
  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

  std::span<const Tensor> params() const { return params_; }
  std::span<const Tensor> velocities() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
};

// Single-tensor step with explicit state; the class above is a convenience
// over this update rule.
void sgd_momentum_step(std::span<double> param, std::span<const double> grad,
                       std::span<double> velocity, double lr, double momentum);

}  // namespace paln

#endif  // PALN_OPTIM_HPP_
