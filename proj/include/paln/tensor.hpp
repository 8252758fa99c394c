#ifndef PALN_TENSOR_HPP_
#define PALN_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "paln/check.hpp"

namespace paln {

// Shaped array of doubles with an optional gradient slot. Handles share
// storage: copying a Tensor aliases the same values/grad. A forward/backward
// pass is single-writer; distinct models may run concurrently.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return st_ != nullptr; }
  const std::vector<int>& shape() const { return st_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(st_->values->size()); }
  int rank() const { return static_cast<int>(st_->shape.size()); }
  int dim(int i) const { return st_->shape[static_cast<std::size_t>(i)]; }

  std::span<double> values() { return {st_->values->data(), st_->values->size()}; }
  std::span<const double> values() const { return {st_->values->data(), st_->values->size()}; }

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool on) { st_->requires_grad = on; }

  // Gradient buffer, zero-initialized on first access.
  std::span<double> grad();
  bool grad_allocated() const { return !st_->grad.empty(); }
  void zero_grad();

  // Handle sharing the same values but detached from gradient flow.
  Tensor detached() const;

  double item() const;
  double at(std::initializer_list<int> idx) const;

  // Identity of the underlying storage; used by the tape.
  const void* storage_id() const { return st_.get(); }

  std::string shape_str() const;

  static std::int64_t shape_size(const std::vector<int>& shape);

 private:
  struct Storage {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  std::shared_ptr<Storage> st_;

  friend class Tape;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// FNV-1a over the value bytes; used by freeze-contract tests.
std::uint64_t value_checksum(std::span<const Tensor> tensors);

}  // namespace paln

#endif  // PALN_TENSOR_HPP_
