// User-facing wrappers over the primitive set, plus a few composite helpers
// and the finite-difference oracle used by the gradient checks.
#pragma once

#include <functional>

#include "gabornet/autograd.hpp"

namespace gabornet {
namespace ops {

enum class Pad { kValid, kSame };

// Elementwise with numpy-style right-aligned broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor pow_scalar(const Tensor& a, double exponent);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope = 0.3);
Tensor selu(const Tensor& a);

// (M,K)x(K,N)->(M,N) or (M,K)x(K,)->(M,).
Tensor matmul(const Tensor& a, const Tensor& b);

// x: (Cin, L), w: (Cout, Cin, K) -> (Cout, Lout).
Tensor conv1d(const Tensor& x, const Tensor& w, int64_t stride = 1,
              Pad pad = Pad::kValid);

// Per-channel convolution, x: (C, L), k: (C, P) -> (C, Lo). The stride-1
// frame count L' (same: L, valid: L-P+1) is truncated to whole stride
// groups: Lo = floor(L'/stride), frame o taken at position o*stride.
Tensor dw_conv1d(const Tensor& x, const Tensor& k, int64_t stride = 1,
                 Pad pad = Pad::kSame);

// x: (Cin, H, W), w: (Cout, Cin, KH, KW), stride 1 -> (Cout, Ho, Wo).
Tensor conv2d(const Tensor& x, const Tensor& w, Pad pad = Pad::kSame);

// Max pooling along one axis. valid: floor((D-k)/s)+1, same: ceil(D/s).
Tensor max_pool(const Tensor& x, int64_t axis, int64_t kernel, int64_t stride,
                Pad pad = Pad::kValid);
Tensor reduce_max(const Tensor& x, int64_t axis, bool keepdim = false);

Tensor sum_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, int64_t axis, bool keepdim = false);

Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
Tensor transpose(const Tensor& x);  // 2-D
// Drops `axis`, picking slice `index`: (R,C) axis 0 -> (C,), axis 1 -> (R,).
Tensor select_index(const Tensor& x, int64_t axis, int64_t index);
// Row subset of a 2-D tensor, in the order given.
Tensor gather_rows(const Tensor& x, std::vector<int64_t> rows);

// Per-channel energy normalization over x: (N, T) with trainable alpha,
// delta, r of shape (N,): y = (x/(eps+m)^alpha + delta)^r - delta^r with
// m the EMA of x along t (m_0 = x_0).
Tensor pcen(const Tensor& x, const Tensor& alpha, const Tensor& delta,
            const Tensor& r, double s, double eps);

// ---- composites (no new primitives) ----

Tensor mean_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, int64_t axis, bool keepdim = false);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
// Row-wise softmax of a 2-D tensor (max-stabilized).
Tensor softmax_rows(const Tensor& x);
// Log-softmax of a 1-D tensor.
Tensor log_softmax(const Tensor& x);

// Central-difference gradient of f at x: (f(x+eps e_i) - f(x-eps e_i))/2eps.
// The independent oracle for every gradient check in the test suites.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double eps = 1e-5);

}  // namespace ops
}  // namespace gabornet
