#include "paln/tensor.hpp"

#include <cstring>

namespace paln {

std::int64_t Tensor::shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) {
    PALN_CHECK(e > 0, "non-positive extent ", e);
    n *= e;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  const std::int64_t n = shape_size(shape);
  Tensor t;
  t.st_ = std::make_shared<Storage>();
  t.st_->shape = std::move(shape);
  t.st_->values = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n), value);
  t.st_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  const std::int64_t n = shape_size(shape);
  PALN_CHECK(n == static_cast<std::int64_t>(values.size()), "shape ", n,
             " does not match value count ", values.size());
  Tensor t;
  t.st_ = std::make_shared<Storage>();
  t.st_->shape = std::move(shape);
  t.st_->values = std::make_shared<std::vector<double>>(std::move(values));
  t.st_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::span<double> Tensor::grad() {
  if (st_->grad.empty()) st_->grad.assign(st_->values->size(), 0.0);
  return {st_->grad.data(), st_->grad.size()};
}

void Tensor::zero_grad() {
  if (!st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.st_ = std::make_shared<Storage>();
  t.st_->shape = st_->shape;
  t.st_->values = st_->values;  // aliases the forward values
  t.st_->requires_grad = false;
  return t;
}

double Tensor::item() const {
  PALN_CHECK(size() == 1, "item() on tensor of size ", size());
  return (*st_->values)[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  PALN_CHECK(idx.size() == st_->shape.size(), "index rank mismatch");
  std::int64_t flat = 0;
  std::size_t d = 0;
  for (int i : idx) {
    PALN_CHECK(i >= 0 && i < st_->shape[d], "index out of range");
    flat = flat * st_->shape[d] + i;
    ++d;
  }
  return (*st_->values)[static_cast<std::size_t>(flat)];
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < st_->shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(st_->shape[i]);
  }
  return s + "]";
}

std::uint64_t value_checksum(std::span<const Tensor> tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor& t : tensors) {
    for (double v : t.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace paln
