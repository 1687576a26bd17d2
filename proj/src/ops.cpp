#include "gabornet/ops.hpp"

#include <cmath>

namespace gabornet {
namespace ops {

namespace {
OpAttrs no_attrs() { return OpAttrs{}; }
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return forward_primitive(OpId::kAdd, {a, b}, no_attrs());
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return forward_primitive(OpId::kSub, {a, b}, no_attrs());
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return forward_primitive(OpId::kMul, {a, b}, no_attrs());
}
Tensor divide(const Tensor& a, const Tensor& b) {
  return forward_primitive(OpId::kDiv, {a, b}, no_attrs());
}
Tensor pow_scalar(const Tensor& a, double exponent) {
  OpAttrs attrs;
  attrs.f0 = exponent;
  return forward_primitive(OpId::kPowScalar, {a}, attrs);
}

Tensor neg(const Tensor& a) { return forward_primitive(OpId::kNeg, {a}, no_attrs()); }
Tensor exp(const Tensor& a) { return forward_primitive(OpId::kExp, {a}, no_attrs()); }
Tensor log(const Tensor& a) { return forward_primitive(OpId::kLog, {a}, no_attrs()); }
Tensor sqrt(const Tensor& a) { return forward_primitive(OpId::kSqrt, {a}, no_attrs()); }
Tensor sin(const Tensor& a) { return forward_primitive(OpId::kSin, {a}, no_attrs()); }
Tensor cos(const Tensor& a) { return forward_primitive(OpId::kCos, {a}, no_attrs()); }
Tensor tanh(const Tensor& a) { return forward_primitive(OpId::kTanh, {a}, no_attrs()); }
Tensor sigmoid(const Tensor& a) {
  return forward_primitive(OpId::kSigmoid, {a}, no_attrs());
}
Tensor leaky_relu(const Tensor& a, double negative_slope) {
  OpAttrs attrs;
  attrs.f0 = negative_slope;
  return forward_primitive(OpId::kLeakyRelu, {a}, attrs);
}
Tensor selu(const Tensor& a) {
  return forward_primitive(OpId::kSelu, {a}, no_attrs());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  return forward_primitive(OpId::kMatMul, {a, b}, no_attrs());
}

Tensor conv1d(const Tensor& x, const Tensor& w, int64_t stride, Pad pad) {
  OpAttrs attrs;
  attrs.i0 = stride;
  attrs.same_pad = pad == Pad::kSame;
  return forward_primitive(OpId::kConv1d, {x, w}, attrs);
}

Tensor dw_conv1d(const Tensor& x, const Tensor& k, int64_t stride, Pad pad) {
  OpAttrs attrs;
  attrs.i0 = stride;
  attrs.same_pad = pad == Pad::kSame;
  return forward_primitive(OpId::kDwConv1d, {x, k}, attrs);
}

Tensor conv2d(const Tensor& x, const Tensor& w, Pad pad) {
  OpAttrs attrs;
  attrs.same_pad = pad == Pad::kSame;
  return forward_primitive(OpId::kConv2d, {x, w}, attrs);
}

Tensor max_pool(const Tensor& x, int64_t axis, int64_t kernel, int64_t stride,
                Pad pad) {
  OpAttrs attrs;
  attrs.i0 = axis;
  attrs.i1 = kernel;
  attrs.i2 = stride;
  attrs.same_pad = pad == Pad::kSame;
  return forward_primitive(OpId::kMaxPool, {x}, attrs);
}

Tensor reduce_max(const Tensor& x, int64_t axis, bool keepdim) {
  OpAttrs attrs;
  attrs.i0 = axis;
  attrs.keepdim = keepdim;
  return forward_primitive(OpId::kReduceMax, {x}, attrs);
}

Tensor sum_all(const Tensor& x) {
  return forward_primitive(OpId::kSumAll, {x}, no_attrs());
}

Tensor sum_axis(const Tensor& x, int64_t axis, bool keepdim) {
  OpAttrs attrs;
  attrs.i0 = axis;
  attrs.keepdim = keepdim;
  return forward_primitive(OpId::kSumAxis, {x}, attrs);
}

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
  OpAttrs attrs;
  attrs.ivec = std::move(shape);
  return forward_primitive(OpId::kReshape, {x}, attrs);
}

Tensor transpose(const Tensor& x) {
  return forward_primitive(OpId::kTranspose, {x}, no_attrs());
}

Tensor select_index(const Tensor& x, int64_t axis, int64_t index) {
  OpAttrs attrs;
  attrs.i0 = axis;
  attrs.i1 = index;
  return forward_primitive(OpId::kSelectIndex, {x}, attrs);
}

Tensor gather_rows(const Tensor& x, std::vector<int64_t> rows) {
  OpAttrs attrs;
  attrs.ivec = std::move(rows);
  return forward_primitive(OpId::kGatherRows, {x}, attrs);
}

Tensor pcen(const Tensor& x, const Tensor& alpha, const Tensor& delta,
            const Tensor& r, double s, double eps) {
  OpAttrs attrs;
  attrs.f0 = s;
  attrs.f1 = eps;
  return forward_primitive(OpId::kPcen, {x, alpha, delta, r}, attrs);
}

Tensor mean_all(const Tensor& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_axis(const Tensor& x, int64_t axis, bool keepdim) {
  return mul_scalar(sum_axis(x, axis, keepdim),
                    1.0 / static_cast<double>(x.dim(axis)));
}

Tensor add_scalar(const Tensor& x, double c) {
  return add(x, Tensor::scalar(c));
}

Tensor mul_scalar(const Tensor& x, double c) {
  return mul(x, Tensor::scalar(c));
}

Tensor softmax_rows(const Tensor& x) {
  Tensor m = reduce_max(x, 1, /*keepdim=*/true);
  Tensor e = exp(sub(x, m));
  Tensor z = sum_axis(e, 1, /*keepdim=*/true);
  return divide(e, z);
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() != 1)
    throw ContractError("log_softmax: expected rank-1 input, got " +
                        shape_to_string(x.shape()));
  Tensor m = reduce_max(x, 0, /*keepdim=*/true);
  Tensor shifted = sub(x, m);
  Tensor z = log(sum_axis(exp(shifted), 0, /*keepdim=*/true));
  return sub(shifted, z);
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double eps) {
  if (eps <= 0) throw ConfigError("finite_difference_grad: eps must be > 0");
  Tensor grad = Tensor::zeros(x.shape());
  Tensor probe = x.clone();
  probe.set_requires_grad(false);
  double* p = probe.mutable_data();
  double* g = grad.mutable_data();
  NoGradScope no_grad;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double hi = f(probe);
    p[i] = saved - eps;
    const double lo = f(probe);
    p[i] = saved;
    if (!std::isfinite(hi) || !std::isfinite(lo))
      throw NumericFault("finite_difference_grad: f evaluated non-finite");
    g[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

}  // namespace ops
}  // namespace gabornet
