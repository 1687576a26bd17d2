// Internal dense kernels behind the conv/matmul primitives. Loops are
// ordered so the hot inner loop is a contiguous fused-multiply-add stream,
// tiled to keep the accumulator slice in L1. Parallel regions write
// disjoint output rows, so results are identical for any thread count.
#pragma once

#include <cstdint>

namespace gabornet {
namespace kernels {

// x: (Cin, L) padded by caller, w: (Cout, Cin, K), stride 1.
void conv1d_forward(const double* xp, int64_t cin, int64_t lp, const double* w,
                    int64_t cout, int64_t k, int64_t lout, double* out);
void conv1d_backward_weight(const double* xp, int64_t cin, int64_t lp,
                            const double* gout, int64_t cout, int64_t k,
                            int64_t lout, double* dw);
void conv1d_backward_input(const double* w, int64_t cout, int64_t cin,
                           int64_t k, const double* gout, int64_t lout,
                           double* dxp, int64_t lp);

// Depthwise: x row padded by caller, kern: (C, P), decimated output.
void dw_conv1d_forward(const double* xp, int64_t c, int64_t lp,
                       const double* kern, int64_t p, int64_t stride,
                       int64_t lout, double* out);
void dw_conv1d_backward_weight(const double* xp, int64_t c, int64_t lp,
                               const double* gout, int64_t p, int64_t stride,
                               int64_t lout, double* dk);
void dw_conv1d_backward_input(const double* kern, int64_t c, int64_t p,
                              const double* gout, int64_t stride, int64_t lout,
                              double* dxp, int64_t lp);

// x padded by caller: (Cin, Hp, Wp), w: (Cout, Cin, KH, KW), stride 1.
void conv2d_forward(const double* xp, int64_t cin, int64_t hp, int64_t wp,
                    const double* w, int64_t cout, int64_t kh, int64_t kw,
                    int64_t ho, int64_t wo, double* out);
void conv2d_backward_weight(const double* xp, int64_t cin, int64_t hp,
                            int64_t wp, const double* gout, int64_t cout,
                            int64_t kh, int64_t kw, int64_t ho, int64_t wo,
                            double* dw);
void conv2d_backward_input(const double* w, int64_t cout, int64_t cin,
                           int64_t kh, int64_t kw, const double* gout,
                           int64_t ho, int64_t wo, double* dxp, int64_t hp,
                           int64_t wp);

// C (M,N) = A (M,K) * B (K,N); N == 1 covers the matvec case.
void matmul(const double* a, int64_t m, int64_t k, const double* b, int64_t n,
            double* out);
void matmul_backward_a(const double* gout, int64_t m, int64_t n,
                       const double* b, int64_t k, double* da);
void matmul_backward_b(const double* a, int64_t m, int64_t k,
                       const double* gout, int64_t n, double* db);

}  // namespace kernels
}  // namespace gabornet
