#include "kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "gabornet/common.hpp"

namespace gabornet {
namespace kernels {

namespace {
constexpr int64_t kTile = 1024;

// Thread spawn is ~50us; only fan out when the arithmetic dwarfs it.
void chunked(int64_t n, int64_t flops,
             const std::function<void(int64_t, int64_t)>& fn) {
  if (flops < (1 << 22)) {
    fn(0, n);
    return;
  }
  parallel_for(n, fn);
}

// out[0..len) += sum_k wk[k] * x[k..k+len) ; tiled so out stays in L1.
inline void axpy_conv_row(const double* x, const double* wk, int64_t k,
                          double* out, int64_t len) {
  for (int64_t tb = 0; tb < len; tb += kTile) {
    const int64_t te = std::min(len, tb + kTile);
    const int64_t tl = te - tb;
    double* o = out + tb;
    int64_t j = 0;
    for (; j + 2 <= k; j += 2) {
      const double w0 = wk[j], w1 = wk[j + 1];
      const double* x0 = x + tb + j;
      const double* x1 = x0 + 1;
      for (int64_t t = 0; t < tl; ++t) o[t] += w0 * x0[t] + w1 * x1[t];
    }
    for (; j < k; ++j) {
      const double wj = wk[j];
      const double* xj = x + tb + j;
      for (int64_t t = 0; t < tl; ++t) o[t] += wj * xj[t];
    }
  }
}

// dw[0..k) += sum_t g[t] * x[t..t+k) ; dw stays in L1, unrolled over t.
inline void axpy_grad_weight(const double* x, const double* g, int64_t lout,
                             int64_t k, double* dw) {
  int64_t t = 0;
  for (; t + 2 <= lout; t += 2) {
    const double g0 = g[t], g1 = g[t + 1];
    const double* x0 = x + t;
    const double* x1 = x0 + 1;
    for (int64_t j = 0; j < k; ++j) dw[j] += g0 * x0[j] + g1 * x1[j];
  }
  for (; t < lout; ++t) {
    const double gt = g[t];
    const double* xt = x + t;
    for (int64_t j = 0; j < k; ++j) dw[j] += gt * xt[j];
  }
}
}  // namespace

void conv1d_forward(const double* xp, int64_t cin, int64_t lp, const double* w,
                    int64_t cout, int64_t k, int64_t lout, double* out) {
  chunked(cout, 2 * cout * cin * k * lout, [&](int64_t b, int64_t e) {
    for (int64_t co = b; co < e; ++co) {
      double* o = out + co * lout;
      std::memset(o, 0, static_cast<size_t>(lout) * sizeof(double));
      for (int64_t ci = 0; ci < cin; ++ci)
        axpy_conv_row(xp + ci * lp, w + (co * cin + ci) * k, k, o, lout);
    }
  });
}

void conv1d_backward_weight(const double* xp, int64_t cin, int64_t lp,
                            const double* gout, int64_t cout, int64_t k,
                            int64_t lout, double* dw) {
  chunked(cout, 2 * cout * cin * k * lout, [&](int64_t b, int64_t e) {
    for (int64_t co = b; co < e; ++co) {
      const double* g = gout + co * lout;
      for (int64_t ci = 0; ci < cin; ++ci)
        axpy_grad_weight(xp + ci * lp, g, lout, k, dw + (co * cin + ci) * k);
    }
  });
}

void conv1d_backward_input(const double* w, int64_t cout, int64_t cin,
                           int64_t k, const double* gout, int64_t lout,
                           double* dxp, int64_t lp) {
  chunked(cin, 2 * cout * cin * k * lout, [&](int64_t b, int64_t e) {
    for (int64_t ci = b; ci < e; ++ci) {
      double* dx = dxp + ci * lp;
      for (int64_t co = 0; co < cout; ++co) {
        const double* g = gout + co * lout;
        const double* wk = w + (co * cin + ci) * k;
        // dxp[t + j] += w[j] * g[t]: same axpy structure, g as the signal.
        for (int64_t j = 0; j < k; ++j) {
          const double wj = wk[j];
          double* d = dx + j;
          for (int64_t t = 0; t < lout; ++t) d[t] += wj * g[t];
        }
      }
    }
  });
}

void dw_conv1d_forward(const double* xp, int64_t c, int64_t lp,
                       const double* kern, int64_t p, int64_t stride,
                       int64_t lout, double* out) {
  chunked(c, 2 * c * p * lout, [&](int64_t b, int64_t e) {
    std::vector<double> phase;
    for (int64_t ch = b; ch < e; ++ch) {
      const double* x = xp + ch * lp;
      const double* kc = kern + ch * p;
      double* o = out + ch * lout;
      std::memset(o, 0, static_cast<size_t>(lout) * sizeof(double));
      if (stride == 1) {
        axpy_conv_row(x, kc, p, o, lout);
        continue;
      }
      // Split x into `stride` decimated phases so each tap becomes a
      // contiguous axpy over the output.
      const int64_t plen = (lp + stride - 1) / stride;
      phase.assign(static_cast<size_t>(stride * plen), 0.0);
      for (int64_t i = 0; i < lp; ++i)
        phase[static_cast<size_t>((i % stride) * plen + i / stride)] = x[i];
      for (int64_t j = 0; j < p; ++j) {
        const double kj = kc[j];
        const double* ph = &phase[static_cast<size_t>((j % stride) * plen +
                                                      j / stride)];
        for (int64_t t = 0; t < lout; ++t) o[t] += kj * ph[t];
      }
    }
  });
}

void dw_conv1d_backward_weight(const double* xp, int64_t c, int64_t lp,
                               const double* gout, int64_t p, int64_t stride,
                               int64_t lout, double* dk) {
  chunked(c, 2 * c * p * lout, [&](int64_t b, int64_t e) {
    for (int64_t ch = b; ch < e; ++ch) {
      const double* x = xp + ch * lp;
      const double* g = gout + ch * lout;
      double* d = dk + ch * p;
      if (stride == 1) {
        axpy_grad_weight(x, g, lout, p, d);
        continue;
      }
      for (int64_t o = 0; o < lout; ++o) {
        const double go = g[o];
        const double* xo = x + o * stride;
        for (int64_t j = 0; j < p; ++j) d[j] += go * xo[j];
      }
    }
  });
}

void dw_conv1d_backward_input(const double* kern, int64_t c, int64_t p,
                              const double* gout, int64_t stride, int64_t lout,
                              double* dxp, int64_t lp) {
  chunked(c, 2 * c * p * lout, [&](int64_t b, int64_t e) {
    for (int64_t ch = b; ch < e; ++ch) {
      const double* kc = kern + ch * p;
      const double* g = gout + ch * lout;
      double* dx = dxp + ch * lp;
      for (int64_t o = 0; o < lout; ++o) {
        const double go = g[o];
        double* d = dx + o * stride;
        for (int64_t j = 0; j < p; ++j) d[j] += go * kc[j];
      }
    }
  });
}

void conv2d_forward(const double* xp, int64_t cin, int64_t hp, int64_t wp,
                    const double* w, int64_t cout, int64_t kh, int64_t kw,
                    int64_t ho, int64_t wo, double* out) {
  const int64_t xplane = hp * wp;
  const int64_t oplane = ho * wo;
  chunked(cout, 2 * cout * cin * kh * kw * ho * wo, [&](int64_t b, int64_t e) {
    for (int64_t co = b; co < e; ++co) {
      double* oc = out + co * oplane;
      std::memset(oc, 0, static_cast<size_t>(oplane) * sizeof(double));
      for (int64_t ci = 0; ci < cin; ++ci) {
        const double* xc = xp + ci * xplane;
        const double* wc = w + (co * cin + ci) * kh * kw;
        for (int64_t dh = 0; dh < kh; ++dh) {
          for (int64_t dw_ = 0; dw_ < kw; ++dw_) {
            const double wgt = wc[dh * kw + dw_];
            for (int64_t h = 0; h < ho; ++h) {
              const double* xr = xc + (h + dh) * wp + dw_;
              double* orow = oc + h * wo;
              for (int64_t x = 0; x < wo; ++x) orow[x] += wgt * xr[x];
            }
          }
        }
      }
    }
  });
}

void conv2d_backward_weight(const double* xp, int64_t cin, int64_t hp,
                            int64_t wp, const double* gout, int64_t cout,
                            int64_t kh, int64_t kw, int64_t ho, int64_t wo,
                            double* dw) {
  const int64_t xplane = hp * wp;
  const int64_t oplane = ho * wo;
  chunked(cout, 2 * cout * cin * kh * kw * ho * wo, [&](int64_t b, int64_t e) {
    for (int64_t co = b; co < e; ++co) {
      const double* g = gout + co * oplane;
      for (int64_t ci = 0; ci < cin; ++ci) {
        const double* xc = xp + ci * xplane;
        double* d = dw + (co * cin + ci) * kh * kw;
        for (int64_t dh = 0; dh < kh; ++dh) {
          for (int64_t dw_ = 0; dw_ < kw; ++dw_) {
            double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
            for (int64_t h = 0; h < ho; ++h) {
              const double* xr = xc + (h + dh) * wp + dw_;
              const double* gr = g + h * wo;
              int64_t x = 0;
              for (; x + 4 <= wo; x += 4) {
                a0 += gr[x] * xr[x];
                a1 += gr[x + 1] * xr[x + 1];
                a2 += gr[x + 2] * xr[x + 2];
                a3 += gr[x + 3] * xr[x + 3];
              }
              for (; x < wo; ++x) a0 += gr[x] * xr[x];
            }
            d[dh * kw + dw_] += ((a0 + a1) + (a2 + a3));
          }
        }
      }
    }
  });
}

void conv2d_backward_input(const double* w, int64_t cout, int64_t cin,
                           int64_t kh, int64_t kw, const double* gout,
                           int64_t ho, int64_t wo, double* dxp, int64_t hp,
                           int64_t wp) {
  const int64_t xplane = hp * wp;
  const int64_t oplane = ho * wo;
  chunked(cin, 2 * cout * cin * kh * kw * ho * wo, [&](int64_t b, int64_t e) {
    for (int64_t ci = b; ci < e; ++ci) {
      double* dx = dxp + ci * xplane;
      for (int64_t co = 0; co < cout; ++co) {
        const double* g = gout + co * oplane;
        const double* wc = w + (co * cin + ci) * kh * kw;
        for (int64_t dh = 0; dh < kh; ++dh) {
          for (int64_t dw_ = 0; dw_ < kw; ++dw_) {
            const double wgt = wc[dh * kw + dw_];
            for (int64_t h = 0; h < ho; ++h) {
              double* dr = dx + (h + dh) * wp + dw_;
              const double* gr = g + h * wo;
              for (int64_t x = 0; x < wo; ++x) dr[x] += wgt * gr[x];
            }
          }
        }
      }
    }
  });
}

void matmul(const double* a, int64_t m, int64_t k, const double* b, int64_t n,
            double* out) {
  std::memset(out, 0, static_cast<size_t>(m * n) * sizeof(double));
  if (n == 1) {
    // Matvec: pipelined dot per row.
    chunked(m, 2 * m * k, [&](int64_t rb, int64_t re) {
      for (int64_t i = rb; i < re; ++i) {
        const double* ar = a + i * k;
        double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
        int64_t j = 0;
        for (; j + 4 <= k; j += 4) {
          a0 += ar[j] * b[j];
          a1 += ar[j + 1] * b[j + 1];
          a2 += ar[j + 2] * b[j + 2];
          a3 += ar[j + 3] * b[j + 3];
        }
        for (; j < k; ++j) a0 += ar[j] * b[j];
        out[i] = (a0 + a1) + (a2 + a3);
      }
    });
    return;
  }
  chunked(m, 2 * m * k * n, [&](int64_t rb, int64_t re) {
    for (int64_t i = rb; i < re; ++i) {
      double* orow = out + i * n;
      const double* ar = a + i * k;
      for (int64_t j = 0; j < k; ++j) {
        const double av = ar[j];
        const double* br = b + j * n;
        for (int64_t c = 0; c < n; ++c) orow[c] += av * br[c];
      }
    }
  });
}

void matmul_backward_a(const double* gout, int64_t m, int64_t n,
                       const double* b, int64_t k, double* da) {
  // da (m,k) += gout (m,n) * b^T (n,k)
  chunked(m, 2 * m * k * n, [&](int64_t rb, int64_t re) {
    for (int64_t i = rb; i < re; ++i) {
      double* dr = da + i * k;
      const double* gr = gout + i * n;
      for (int64_t c = 0; c < n; ++c) {
        const double gv = gr[c];
        for (int64_t j = 0; j < k; ++j) dr[j] += gv * b[j * n + c];
      }
    }
  });
}

void matmul_backward_b(const double* a, int64_t m, int64_t k,
                       const double* gout, int64_t n, double* db) {
  // db (k,n) += a^T (k,m) * gout (m,n)
  chunked(k, 2 * m * k * n, [&](int64_t rb, int64_t re) {
    for (int64_t j = rb; j < re; ++j) {
      double* dr = db + j * n;
      for (int64_t i = 0; i < m; ++i) {
        const double av = a[i * k + j];
        const double* gr = gout + i * n;
        for (int64_t c = 0; c < n; ++c) dr[c] += av * gr[c];
      }
    }
  });
}

}  // namespace kernels
}  // namespace gabornet
