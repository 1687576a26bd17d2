#include "gabornet/tensor.hpp"

namespace gabornet {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0)
      throw ContractError("tensor shape has non-positive extent " +
                          shape_to_string(shape));
    n *= d;
  }
  return n;
}

namespace {
std::shared_ptr<TensorImpl> make_impl(std::vector<int64_t> shape) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.resize(static_cast<size_t>(n));
  return impl;
}
}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  return Tensor(make_impl(std::move(shape)));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  auto impl = make_impl(std::move(shape));
  for (double& v : impl->data) v = value;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(std::vector<double> data, std::vector<int64_t> shape) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(data.size()))
    throw ContractError("Tensor::from: " + std::to_string(data.size()) +
                        " values do not fill shape " + shape_to_string(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Rng& rng, std::vector<int64_t> shape, double lo,
                       double hi) {
  auto impl = make_impl(std::move(shape));
  for (double& v : impl->data) v = rng.uniform(lo, hi);
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  return Tensor(std::make_shared<TensorImpl>(*impl_));
}

}  // namespace gabornet
