// Dense row-major float64 tensors. Value-semantic handles over shared
// storage; the autograd tape holds handles, never copies of the data.
#pragma once

#include <memory>
#include <vector>

#include "gabornet/common.hpp"

namespace gabornet {

struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value) { return full({}, value); }
  static Tensor from(std::vector<double> data, std::vector<int64_t> shape);
  static Tensor uniform(Rng& rng, std::vector<int64_t> shape, double lo,
                        double hi);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t dim(int64_t i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  const double* data() const { return impl_->data.data(); }
  double* mutable_data() { return impl_->data.data(); }
  const std::vector<double>& values() const { return impl_->data; }
  std::vector<double>& mutable_values() { return impl_->data; }

  double item() const {
    if (numel() != 1)
      throw ContractError("Tensor::item: tensor has " +
                          std::to_string(numel()) + " elements, expected 1");
    return impl_->data[0];
  }
  double at(int64_t i) const { return impl_->data[static_cast<size_t>(i)]; }
  double at(int64_t i, int64_t j) const {
    return impl_->data[static_cast<size_t>(i * dim(1) + j)];
  }
  double at(int64_t i, int64_t j, int64_t k) const {
    return impl_->data[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
  }

  const TensorImpl* impl() const { return impl_.get(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Deep copy with fresh storage (used by the optimizer and checkpointing).
  Tensor clone() const;

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<TensorImpl> impl_;
};

// Real/imaginary pair of equal shape; the output of complex Gabor
// convolution before the squared modulus collapses it.
struct ComplexTensor {
  Tensor real;
  Tensor imag;

  ComplexTensor() = default;
  ComplexTensor(Tensor re, Tensor im) : real(std::move(re)), imag(std::move(im)) {
    if (real.shape() != imag.shape())
      throw ContractError("ComplexTensor: real shape " +
                          shape_to_string(real.shape()) + " != imag shape " +
                          shape_to_string(imag.shape()));
  }
};

int64_t shape_numel(const std::vector<int64_t>& shape);

}  // namespace gabornet
