#include "gabornet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "gabornet/common.hpp"
#include "kernels.hpp"

namespace gabornet {

const char* op_name(OpId op) {
  switch (op) {
    case OpId::kAdd: return "add";
    case OpId::kSub: return "sub";
    case OpId::kMul: return "mul";
    case OpId::kDiv: return "div";
    case OpId::kPowScalar: return "pow_scalar";
    case OpId::kNeg: return "neg";
    case OpId::kExp: return "exp";
    case OpId::kLog: return "log";
    case OpId::kSqrt: return "sqrt";
    case OpId::kSin: return "sin";
    case OpId::kCos: return "cos";
    case OpId::kTanh: return "tanh";
    case OpId::kSigmoid: return "sigmoid";
    case OpId::kLeakyRelu: return "leaky_relu";
    case OpId::kSelu: return "selu";
    case OpId::kMatMul: return "matmul";
    case OpId::kConv1d: return "conv1d";
    case OpId::kDwConv1d: return "dw_conv1d";
    case OpId::kConv2d: return "conv2d";
    case OpId::kMaxPool: return "max_pool";
    case OpId::kReduceMax: return "reduce_max";
    case OpId::kSumAll: return "sum_all";
    case OpId::kSumAxis: return "sum_axis";
    case OpId::kReshape: return "reshape";
    case OpId::kTranspose: return "transpose";
    case OpId::kSelectIndex: return "select_index";
    case OpId::kGatherRows: return "gather_rows";
    case OpId::kPcen: return "pcen";
  }
  return "?";
}

namespace {

thread_local Tape* t_current_tape = nullptr;

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

std::vector<int64_t> broadcast_shape(OpId op, const std::vector<int64_t>& a,
                                     const std::vector<int64_t>& b) {
  size_t ra = a.size(), rb = b.size();
  size_t r = std::max(ra, rb);
  std::vector<int64_t> out(r, 1);
  for (size_t d = 0; d < r; ++d) {
    int64_t da = d < r - ra ? 1 : a[d - (r - ra)];
    int64_t db = d < r - rb ? 1 : b[d - (r - rb)];
    if (da != db && da != 1 && db != 1)
      throw ContractError(std::string(op_name(op)) +
                          ": cannot broadcast shapes " + shape_to_string(a) +
                          " and " + shape_to_string(b));
    out[d] = std::max(da, db);
  }
  return out;
}

// Maps a flat index in the result space to a flat index in one operand.
struct OffsetMap {
  enum Kind { kFull, kScalar, kTrail, kLead, kTable } kind = kFull;
  int64_t param = 1;
  std::vector<int64_t> table;

  int64_t operator()(int64_t i) const {
    switch (kind) {
      case kFull: return i;
      case kScalar: return 0;
      case kTrail: return i / param;
      case kLead: return i % param;
      case kTable: return table[static_cast<size_t>(i)];
    }
    return i;
  }
};

OffsetMap make_offset_map(const std::vector<int64_t>& in,
                          const std::vector<int64_t>& result) {
  OffsetMap m;
  size_t r = result.size();
  std::vector<int64_t> aligned(r, 1);
  for (size_t d = 0; d < in.size(); ++d)
    aligned[r - in.size() + d] = in[d];
  if (aligned == result) {
    m.kind = OffsetMap::kFull;
    return m;
  }
  int64_t n_in = 1;
  for (int64_t d : aligned) n_in *= d;
  if (n_in == 1) {
    m.kind = OffsetMap::kScalar;
    return m;
  }
  // Trailing ones: (C,1), (C,1,1) style.
  {
    size_t d = r;
    int64_t inner = 1;
    while (d > 0 && aligned[d - 1] == 1 && result[d - 1] != 1) {
      inner *= result[d - 1];
      --d;
    }
    bool prefix_ok = inner > 1;
    for (size_t p = 0; p < d && prefix_ok; ++p)
      if (aligned[p] != result[p]) prefix_ok = false;
    if (prefix_ok) {
      m.kind = OffsetMap::kTrail;
      m.param = inner;
      return m;
    }
  }
  // Leading ones: (1,W) or (W,) style.
  {
    size_t d = 0;
    while (d < r && aligned[d] == 1 && result[d] != 1) ++d;
    bool suffix_ok = d > 0;
    int64_t inner = 1;
    for (size_t p = d; p < r && suffix_ok; ++p) {
      if (aligned[p] != result[p]) suffix_ok = false;
      inner *= result[p];
    }
    if (suffix_ok) {
      m.kind = OffsetMap::kLead;
      m.param = inner;
      return m;
    }
  }
  // General case: materialize the index table with an odometer walk.
  m.kind = OffsetMap::kTable;
  int64_t n = 1;
  for (int64_t d : result) n *= d;
  std::vector<int64_t> strides(r, 0);
  int64_t run = 1;
  for (size_t d = r; d-- > 0;) {
    strides[d] = aligned[d] == 1 ? 0 : run;
    run *= aligned[d];
  }
  m.table.resize(static_cast<size_t>(n));
  std::vector<int64_t> idx(r, 0);
  int64_t off = 0;
  for (int64_t i = 0; i < n; ++i) {
    m.table[static_cast<size_t>(i)] = off;
    for (size_t d = r; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < result[d]) break;
      idx[d] = 0;
      off -= strides[d] * result[d];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Shape helpers for the structured ops
// ---------------------------------------------------------------------------

struct Conv1dGeom {
  int64_t cin, l, cout, k, stride, pad_left, lp, lout;
};

Conv1dGeom conv1d_geometry(const Tensor& x, const Tensor& w,
                           const OpAttrs& attrs) {
  if (x.rank() != 2 || w.rank() != 3)
    throw ContractError("conv1d: expected input (Cin,L) and kernel "
                        "(Cout,Cin,K), got input " + shape_to_string(x.shape()) +
                        " kernel " + shape_to_string(w.shape()));
  Conv1dGeom g;
  g.cin = x.dim(0);
  g.l = x.dim(1);
  g.cout = w.dim(0);
  g.k = w.dim(2);
  if (w.dim(1) != g.cin)
    throw ContractError("conv1d: kernel expects " + std::to_string(w.dim(1)) +
                        " input channels but input has " +
                        std::to_string(g.cin) + " (kernel " +
                        shape_to_string(w.shape()) + ", input " +
                        shape_to_string(x.shape()) + ")");
  g.stride = attrs.i0 < 1 ? 1 : attrs.i0;
  int64_t pad_total = attrs.same_pad ? g.k - 1 : 0;
  g.pad_left = pad_total / 2;
  g.lp = g.l + pad_total;
  if (g.lp < g.k)
    throw ConfigError("conv1d: input length " + std::to_string(g.l) +
                      " too short for kernel length " + std::to_string(g.k));
  g.lout = (g.lp - g.k) / g.stride + 1;
  return g;
}

std::vector<double> pad_rows(const double* x, int64_t rows, int64_t l,
                             int64_t lp, int64_t pad_left) {
  std::vector<double> xp(static_cast<size_t>(rows * lp), 0.0);
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(&xp[static_cast<size_t>(r * lp + pad_left)], x + r * l,
                static_cast<size_t>(l) * sizeof(double));
  return xp;
}

struct DwGeom {
  int64_t c, l, p, stride, pad_left, lp, l1, lout;
};

DwGeom dw_geometry(const Tensor& x, const Tensor& k, const OpAttrs& attrs) {
  if (x.rank() != 2 || k.rank() != 2 || x.dim(0) != k.dim(0))
    throw ContractError("dw_conv1d: expected input (C,L) and kernel (C,P) "
                        "with matching C, got input " +
                        shape_to_string(x.shape()) + " kernel " +
                        shape_to_string(k.shape()));
  DwGeom g;
  g.c = x.dim(0);
  g.l = x.dim(1);
  g.p = k.dim(1);
  g.stride = attrs.i0 < 1 ? 1 : attrs.i0;
  int64_t pad_total = attrs.same_pad ? g.p - 1 : 0;
  g.pad_left = pad_total / 2;
  g.lp = g.l + pad_total;
  if (g.lp < g.p)
    throw ConfigError("dw_conv1d: " + std::to_string(g.l) +
                      " frames is fewer than kernel length " +
                      std::to_string(g.p) + " in valid mode");
  g.l1 = g.lp - g.p + 1;  // stride-1 frame count
  g.lout = g.l1 / g.stride;
  if (g.lout < 1)
    throw ConfigError("dw_conv1d: no complete stride group (frames " +
                      std::to_string(g.l1) + ", stride " +
                      std::to_string(g.stride) + ")");
  return g;
}

struct Conv2dGeom {
  int64_t cin, h, w, cout, kh, kw, pad_top, pad_left, hp, wp, ho, wo;
};

Conv2dGeom conv2d_geometry(const Tensor& x, const Tensor& w,
                           const OpAttrs& attrs) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0))
    throw ContractError("conv2d: expected input (Cin,H,W) and kernel "
                        "(Cout,Cin,KH,KW), got input " +
                        shape_to_string(x.shape()) + " kernel " +
                        shape_to_string(w.shape()));
  Conv2dGeom g;
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  int64_t pt = attrs.same_pad ? g.kh - 1 : 0;
  int64_t pl = attrs.same_pad ? g.kw - 1 : 0;
  g.pad_top = pt / 2;
  g.pad_left = pl / 2;
  g.hp = g.h + pt;
  g.wp = g.w + pl;
  if (g.hp < g.kh || g.wp < g.kw)
    throw ConfigError("conv2d: input " + shape_to_string(x.shape()) +
                      " too small for kernel " + shape_to_string(w.shape()));
  g.ho = g.hp - g.kh + 1;
  g.wo = g.wp - g.kw + 1;
  return g;
}

std::vector<double> pad_planes(const double* x, int64_t c, int64_t h,
                               int64_t w, int64_t hp, int64_t wp,
                               int64_t pad_top, int64_t pad_left) {
  std::vector<double> xp(static_cast<size_t>(c * hp * wp), 0.0);
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t r = 0; r < h; ++r)
      std::memcpy(&xp[static_cast<size_t>((ci * hp + r + pad_top) * wp +
                                          pad_left)],
                  x + (ci * h + r) * w, static_cast<size_t>(w) * sizeof(double));
  return xp;
}

struct AxisGeom {
  int64_t outer, d, inner;
};

AxisGeom axis_geometry(const Tensor& x, int64_t axis, OpId op) {
  if (axis < 0 || axis >= x.rank())
    throw ContractError(std::string(op_name(op)) + ": axis " +
                        std::to_string(axis) + " out of range for shape " +
                        shape_to_string(x.shape()));
  AxisGeom g{1, x.dim(axis), 1};
  for (int64_t d = 0; d < axis; ++d) g.outer *= x.dim(d);
  for (int64_t d = axis + 1; d < x.rank(); ++d) g.inner *= x.dim(d);
  return g;
}

struct PoolGeom {
  AxisGeom ax;
  int64_t kernel, stride, pad_left, dout;
};

PoolGeom pool_geometry(const Tensor& x, const OpAttrs& attrs) {
  PoolGeom g;
  g.ax = axis_geometry(x, attrs.i0, OpId::kMaxPool);
  g.kernel = attrs.i1;
  g.stride = attrs.i2 < 1 ? g.kernel : attrs.i2;
  if (g.kernel < 1) throw ConfigError("max_pool: kernel must be >= 1");
  if (attrs.same_pad) {
    g.dout = (g.ax.d + g.stride - 1) / g.stride;
    int64_t pad_total =
        std::max<int64_t>(0, (g.dout - 1) * g.stride + g.kernel - g.ax.d);
    g.pad_left = pad_total / 2;
  } else {
    if (g.ax.d < g.kernel)
      throw ConfigError("max_pool: extent " + std::to_string(g.ax.d) +
                        " smaller than kernel " + std::to_string(g.kernel));
    g.dout = (g.ax.d - g.kernel) / g.stride + 1;
    g.pad_left = 0;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Forward kernels
// ---------------------------------------------------------------------------

struct FwdResult {
  Tensor out;
  std::vector<Tensor> saved;
  std::vector<int64_t> saved_idx;
};

double unary_fwd(OpId op, double x, const OpAttrs& attrs) {
  switch (op) {
    case OpId::kNeg: return -x;
    case OpId::kExp: return std::exp(x);
    case OpId::kLog: return std::log(x);
    case OpId::kSqrt: return std::sqrt(x);
    case OpId::kSin: return std::sin(x);
    case OpId::kCos: return std::cos(x);
    case OpId::kTanh: return std::tanh(x);
    case OpId::kSigmoid:
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
    case OpId::kLeakyRelu: return x > 0 ? x : attrs.f0 * x;
    case OpId::kSelu:
      return x > 0 ? kSeluLambda * x
                   : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
    case OpId::kPowScalar: return std::pow(x, attrs.f0);
    default: throw ContractError("unary_fwd: bad op");
  }
}

double binary_fwd(OpId op, double a, double b) {
  switch (op) {
    case OpId::kAdd: return a + b;
    case OpId::kSub: return a - b;
    case OpId::kMul: return a * b;
    case OpId::kDiv: return a / b;
    default: throw ContractError("binary_fwd: bad op");
  }
}

FwdResult forward_compute(OpId op, const std::vector<Tensor>& in,
                          OpAttrs& attrs) {
  FwdResult r;
  switch (op) {
    case OpId::kAdd:
    case OpId::kSub:
    case OpId::kMul:
    case OpId::kDiv: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      auto rshape = broadcast_shape(op, a.shape(), b.shape());
      Tensor out = Tensor::zeros(rshape);
      OffsetMap ma = make_offset_map(a.shape(), rshape);
      OffsetMap mb = make_offset_map(b.shape(), rshape);
      const double* pa = a.data();
      const double* pb = b.data();
      double* po = out.mutable_data();
      int64_t n = out.numel();
      if (ma.kind == OffsetMap::kFull && mb.kind == OffsetMap::kFull) {
        switch (op) {
          case OpId::kAdd: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
          case OpId::kSub: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
          case OpId::kMul: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
          default: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i]; break;
        }
      } else {
        for (int64_t i = 0; i < n; ++i)
          po[i] = binary_fwd(op, pa[ma(i)], pb[mb(i)]);
      }
      r.out = out;
      return r;
    }
    case OpId::kNeg:
    case OpId::kExp:
    case OpId::kLog:
    case OpId::kSqrt:
    case OpId::kSin:
    case OpId::kCos:
    case OpId::kTanh:
    case OpId::kSigmoid:
    case OpId::kLeakyRelu:
    case OpId::kSelu:
    case OpId::kPowScalar: {
      const Tensor& x = in[0];
      Tensor out = Tensor::zeros(x.shape());
      const double* px = x.data();
      double* po = out.mutable_data();
      for (int64_t i = 0; i < x.numel(); ++i) po[i] = unary_fwd(op, px[i], attrs);
      r.out = out;
      return r;
    }
    case OpId::kMatMul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1) ||
          a.dim(1) != b.dim(0))
        throw ContractError("matmul: incompatible shapes " +
                            shape_to_string(a.shape()) + " x " +
                            shape_to_string(b.shape()));
      int64_t m = a.dim(0), k = a.dim(1);
      int64_t n = b.rank() == 2 ? b.dim(1) : 1;
      Tensor out = b.rank() == 2 ? Tensor::zeros({m, n}) : Tensor::zeros({m});
      kernels::matmul(a.data(), m, k, b.data(), n, out.mutable_data());
      r.out = out;
      return r;
    }
    case OpId::kConv1d: {
      Conv1dGeom g = conv1d_geometry(in[0], in[1], attrs);
      Tensor out = Tensor::zeros({g.cout, g.lout});
      if (g.stride == 1) {
        if (attrs.same_pad) {
          auto xp = pad_rows(in[0].data(), g.cin, g.l, g.lp, g.pad_left);
          kernels::conv1d_forward(xp.data(), g.cin, g.lp, in[1].data(), g.cout,
                                  g.k, g.lout, out.mutable_data());
        } else {
          kernels::conv1d_forward(in[0].data(), g.cin, g.l, in[1].data(),
                                  g.cout, g.k, g.lout, out.mutable_data());
        }
      } else {
        auto xp = pad_rows(in[0].data(), g.cin, g.l, g.lp, g.pad_left);
        const double* w = in[1].data();
        double* po = out.mutable_data();
        for (int64_t co = 0; co < g.cout; ++co)
          for (int64_t t = 0; t < g.lout; ++t) {
            double acc = 0;
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const double* xr = &xp[static_cast<size_t>(ci * g.lp + t * g.stride)];
              const double* wr = w + (co * g.cin + ci) * g.k;
              for (int64_t j = 0; j < g.k; ++j) acc += xr[j] * wr[j];
            }
            po[co * g.lout + t] = acc;
          }
      }
      r.out = out;
      return r;
    }
    case OpId::kDwConv1d: {
      DwGeom g = dw_geometry(in[0], in[1], attrs);
      Tensor out = Tensor::zeros({g.c, g.lout});
      if (attrs.same_pad) {
        auto xp = pad_rows(in[0].data(), g.c, g.l, g.lp, g.pad_left);
        kernels::dw_conv1d_forward(xp.data(), g.c, g.lp, in[1].data(), g.p,
                                   g.stride, g.lout, out.mutable_data());
      } else {
        kernels::dw_conv1d_forward(in[0].data(), g.c, g.l, in[1].data(), g.p,
                                   g.stride, g.lout, out.mutable_data());
      }
      r.out = out;
      return r;
    }
    case OpId::kConv2d: {
      Conv2dGeom g = conv2d_geometry(in[0], in[1], attrs);
      Tensor out = Tensor::zeros({g.cout, g.ho, g.wo});
      if (attrs.same_pad) {
        auto xp = pad_planes(in[0].data(), g.cin, g.h, g.w, g.hp, g.wp,
                             g.pad_top, g.pad_left);
        kernels::conv2d_forward(xp.data(), g.cin, g.hp, g.wp, in[1].data(),
                                g.cout, g.kh, g.kw, g.ho, g.wo,
                                out.mutable_data());
      } else {
        kernels::conv2d_forward(in[0].data(), g.cin, g.h, g.w, in[1].data(),
                                g.cout, g.kh, g.kw, g.ho, g.wo,
                                out.mutable_data());
      }
      r.out = out;
      return r;
    }
    case OpId::kMaxPool: {
      PoolGeom g = pool_geometry(in[0], attrs);
      std::vector<int64_t> oshape = in[0].shape();
      oshape[static_cast<size_t>(attrs.i0)] = g.dout;
      Tensor out = Tensor::zeros(oshape);
      r.saved_idx.resize(static_cast<size_t>(out.numel()));
      const double* px = in[0].data();
      double* po = out.mutable_data();
      int64_t oi = 0;
      for (int64_t ou = 0; ou < g.ax.outer; ++ou)
        for (int64_t o = 0; o < g.dout; ++o)
          for (int64_t inn = 0; inn < g.ax.inner; ++inn, ++oi) {
            int64_t lo = std::max<int64_t>(0, o * g.stride - g.pad_left);
            int64_t hi = std::min<int64_t>(g.ax.d,
                                           o * g.stride - g.pad_left + g.kernel);
            int64_t best = -1;
            double bv = 0;
            for (int64_t d = lo; d < hi; ++d) {
              int64_t idx = (ou * g.ax.d + d) * g.ax.inner + inn;
              if (best < 0 || px[idx] > bv) {
                bv = px[idx];
                best = idx;
              }
            }
            // recompute flat output position from the loop order
            int64_t opos = (ou * g.dout + o) * g.ax.inner + inn;
            po[opos] = bv;
            r.saved_idx[static_cast<size_t>(opos)] = best;
          }
      (void)oi;
      r.out = out;
      return r;
    }
    case OpId::kReduceMax: {
      AxisGeom g = axis_geometry(in[0], attrs.i0, op);
      std::vector<int64_t> oshape;
      for (int64_t d = 0; d < in[0].rank(); ++d) {
        if (d == attrs.i0) {
          if (attrs.keepdim) oshape.push_back(1);
        } else {
          oshape.push_back(in[0].dim(d));
        }
      }
      Tensor out = Tensor::zeros(oshape);
      r.saved_idx.resize(static_cast<size_t>(out.numel()));
      const double* px = in[0].data();
      double* po = out.mutable_data();
      for (int64_t ou = 0; ou < g.outer; ++ou)
        for (int64_t inn = 0; inn < g.inner; ++inn) {
          int64_t best = ou * g.d * g.inner + inn;
          double bv = px[best];
          for (int64_t d = 1; d < g.d; ++d) {
            int64_t idx = (ou * g.d + d) * g.inner + inn;
            if (px[idx] > bv) {
              bv = px[idx];
              best = idx;
            }
          }
          int64_t opos = ou * g.inner + inn;
          po[opos] = bv;
          r.saved_idx[static_cast<size_t>(opos)] = best;
        }
      r.out = out;
      return r;
    }
    case OpId::kSumAll: {
      double acc = 0;
      const double* px = in[0].data();
      for (int64_t i = 0; i < in[0].numel(); ++i) acc += px[i];
      r.out = Tensor::scalar(acc);
      return r;
    }
    case OpId::kSumAxis: {
      AxisGeom g = axis_geometry(in[0], attrs.i0, op);
      std::vector<int64_t> oshape;
      for (int64_t d = 0; d < in[0].rank(); ++d) {
        if (d == attrs.i0) {
          if (attrs.keepdim) oshape.push_back(1);
        } else {
          oshape.push_back(in[0].dim(d));
        }
      }
      Tensor out = Tensor::zeros(oshape);
      const double* px = in[0].data();
      double* po = out.mutable_data();
      for (int64_t ou = 0; ou < g.outer; ++ou)
        for (int64_t d = 0; d < g.d; ++d) {
          const double* row = px + (ou * g.d + d) * g.inner;
          double* orow = po + ou * g.inner;
          for (int64_t inn = 0; inn < g.inner; ++inn) orow[inn] += row[inn];
        }
      r.out = out;
      return r;
    }
    case OpId::kReshape: {
      if (shape_numel(attrs.ivec) != in[0].numel())
        throw ContractError("reshape: cannot view " +
                            shape_to_string(in[0].shape()) + " as " +
                            shape_to_string(attrs.ivec));
      r.out = Tensor::from(in[0].values(), attrs.ivec);
      return r;
    }
    case OpId::kTranspose: {
      if (in[0].rank() != 2)
        throw ContractError("transpose: expected rank 2, got " +
                            shape_to_string(in[0].shape()));
      int64_t rows = in[0].dim(0), cols = in[0].dim(1);
      Tensor out = Tensor::zeros({cols, rows});
      const double* px = in[0].data();
      double* po = out.mutable_data();
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) po[j * rows + i] = px[i * cols + j];
      r.out = out;
      return r;
    }
    case OpId::kSelectIndex: {
      const Tensor& x = in[0];
      int64_t axis = attrs.i0, index = attrs.i1;
      AxisGeom g = axis_geometry(x, axis, op);
      if (index < 0 || index >= g.d)
        throw ContractError("select_index: index " + std::to_string(index) +
                            " out of range for axis extent " +
                            std::to_string(g.d));
      std::vector<int64_t> oshape;
      for (int64_t d = 0; d < x.rank(); ++d)
        if (d != axis) oshape.push_back(x.dim(d));
      Tensor out = Tensor::zeros(oshape);
      const double* px = x.data();
      double* po = out.mutable_data();
      for (int64_t ou = 0; ou < g.outer; ++ou)
        for (int64_t inn = 0; inn < g.inner; ++inn)
          po[ou * g.inner + inn] = px[(ou * g.d + index) * g.inner + inn];
      r.out = out;
      return r;
    }
    case OpId::kGatherRows: {
      const Tensor& x = in[0];
      if (x.rank() != 2)
        throw ContractError("gather_rows: expected rank 2, got " +
                            shape_to_string(x.shape()));
      int64_t cols = x.dim(1);
      int64_t nrows = static_cast<int64_t>(attrs.ivec.size());
      Tensor out = Tensor::zeros({nrows, cols});
      double* po = out.mutable_data();
      for (int64_t i = 0; i < nrows; ++i) {
        int64_t src = attrs.ivec[static_cast<size_t>(i)];
        if (src < 0 || src >= x.dim(0))
          throw ContractError("gather_rows: row " + std::to_string(src) +
                              " out of range for " +
                              shape_to_string(x.shape()));
        std::memcpy(po + i * cols, x.data() + src * cols,
                    static_cast<size_t>(cols) * sizeof(double));
      }
      r.out = out;
      return r;
    }
    case OpId::kPcen: {
      const Tensor& x = in[0];
      const Tensor& alpha = in[1];
      const Tensor& delta = in[2];
      const Tensor& rr = in[3];
      if (x.rank() != 2)
        throw ContractError("pcen: expected map (N,T), got " +
                            shape_to_string(x.shape()));
      int64_t nch = x.dim(0), t = x.dim(1);
      auto check_param = [&](const Tensor& p, const char* name) {
        if (p.rank() != 1 || p.dim(0) != nch)
          throw ContractError(std::string("pcen: ") + name + " shape " +
                              shape_to_string(p.shape()) + " does not match " +
                              std::to_string(nch) + " channels");
      };
      check_param(alpha, "alpha");
      check_param(delta, "delta");
      check_param(rr, "r");
      double s = attrs.f0, eps = attrs.f1;
      if (s <= 0.0 || s > 1.0) throw ConfigError("pcen: s must be in (0,1]");
      if (eps <= 0.0) throw ConfigError("pcen: eps must be > 0");
      Tensor out = Tensor::zeros(x.shape());
      Tensor m = Tensor::zeros(x.shape());
      Tensor u = Tensor::zeros(x.shape());
      const double* px = x.data();
      double* po = out.mutable_data();
      double* pm = m.mutable_data();
      double* pu = u.mutable_data();
      for (int64_t n = 0; n < nch; ++n) {
        const double a = alpha.at(n), d = delta.at(n), re = rr.at(n);
        const double dr = std::pow(d, re);
        const double* xr = px + n * t;
        double* orow = po + n * t;
        double* mrow = pm + n * t;
        double* urow = pu + n * t;
        double mt = xr[0];
        for (int64_t i = 0; i < t; ++i) {
          if (i > 0) mt = (1.0 - s) * mt + s * xr[i];
          mrow[i] = mt;
          double ut = std::pow(eps + mt, -a);
          urow[i] = ut;
          orow[i] = std::pow(xr[i] * ut + d, re) - dr;
        }
      }
      r.out = out;
      r.saved.push_back(m);
      r.saved.push_back(u);
      return r;
    }
  }
  throw ContractError("forward_compute: unhandled op");
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

using AccMap = std::unordered_map<const TensorImpl*, std::vector<double>>;

std::vector<double>& acc_for(AccMap& acc, const Tensor& t) {
  auto it = acc.find(t.impl());
  if (it == acc.end())
    it = acc.emplace(t.impl(),
                     std::vector<double>(static_cast<size_t>(t.numel()), 0.0))
             .first;
  return it->second;
}

void backward_node(const TapeNode& node, const std::vector<double>& g,
                   AccMap& acc) {
  const OpAttrs& attrs = node.attrs;
  const auto& in = node.inputs;
  auto wants = [&](size_t i) { return in[i].requires_grad(); };
  switch (node.op) {
    case OpId::kAdd:
    case OpId::kSub:
    case OpId::kMul:
    case OpId::kDiv: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      const auto& rshape = node.output.shape();
      OffsetMap ma = make_offset_map(a.shape(), rshape);
      OffsetMap mb = make_offset_map(b.shape(), rshape);
      const double* pa = a.data();
      const double* pb = b.data();
      int64_t n = node.output.numel();
      if (wants(0)) {
        auto& da = acc_for(acc, a);
        switch (node.op) {
          case OpId::kAdd:
          case OpId::kSub:
            for (int64_t i = 0; i < n; ++i) da[static_cast<size_t>(ma(i))] += g[static_cast<size_t>(i)];
            break;
          case OpId::kMul:
            for (int64_t i = 0; i < n; ++i)
              da[static_cast<size_t>(ma(i))] += g[static_cast<size_t>(i)] * pb[mb(i)];
            break;
          default:
            for (int64_t i = 0; i < n; ++i)
              da[static_cast<size_t>(ma(i))] += g[static_cast<size_t>(i)] / pb[mb(i)];
            break;
        }
      }
      if (wants(1)) {
        auto& db = acc_for(acc, b);
        switch (node.op) {
          case OpId::kAdd:
            for (int64_t i = 0; i < n; ++i) db[static_cast<size_t>(mb(i))] += g[static_cast<size_t>(i)];
            break;
          case OpId::kSub:
            for (int64_t i = 0; i < n; ++i) db[static_cast<size_t>(mb(i))] -= g[static_cast<size_t>(i)];
            break;
          case OpId::kMul:
            for (int64_t i = 0; i < n; ++i)
              db[static_cast<size_t>(mb(i))] += g[static_cast<size_t>(i)] * pa[ma(i)];
            break;
          default:
            for (int64_t i = 0; i < n; ++i) {
              double bv = pb[mb(i)];
              db[static_cast<size_t>(mb(i))] -=
                  g[static_cast<size_t>(i)] * pa[ma(i)] / (bv * bv);
            }
            break;
        }
      }
      return;
    }
    case OpId::kNeg:
    case OpId::kExp:
    case OpId::kLog:
    case OpId::kSqrt:
    case OpId::kSin:
    case OpId::kCos:
    case OpId::kTanh:
    case OpId::kSigmoid:
    case OpId::kLeakyRelu:
    case OpId::kSelu:
    case OpId::kPowScalar: {
      if (!wants(0)) return;
      auto& dx = acc_for(acc, in[0]);
      const double* px = in[0].data();
      const double* py = node.output.data();
      int64_t n = node.output.numel();
      for (int64_t i = 0; i < n; ++i) {
        double d;
        switch (node.op) {
          case OpId::kNeg: d = -1.0; break;
          case OpId::kExp: d = py[i]; break;
          case OpId::kLog: d = 1.0 / px[i]; break;
          case OpId::kSqrt: d = 0.5 / py[i]; break;
          case OpId::kSin: d = std::cos(px[i]); break;
          case OpId::kCos: d = -std::sin(px[i]); break;
          case OpId::kTanh: d = 1.0 - py[i] * py[i]; break;
          case OpId::kSigmoid: d = py[i] * (1.0 - py[i]); break;
          case OpId::kLeakyRelu: d = px[i] > 0 ? 1.0 : attrs.f0; break;
          case OpId::kSelu:
            d = px[i] > 0 ? kSeluLambda
                          : kSeluLambda * kSeluAlpha * std::exp(px[i]);
            break;
          case OpId::kPowScalar:
            d = attrs.f0 * std::pow(px[i], attrs.f0 - 1.0);
            break;
          default: d = 0.0; break;
        }
        dx[static_cast<size_t>(i)] += d * g[static_cast<size_t>(i)];
      }
      return;
    }
    case OpId::kMatMul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      int64_t m = a.dim(0), k = a.dim(1);
      int64_t n = b.rank() == 2 ? b.dim(1) : 1;
      if (wants(0))
        kernels::matmul_backward_a(g.data(), m, n, b.data(), k,
                                   acc_for(acc, a).data());
      if (wants(1))
        kernels::matmul_backward_b(a.data(), m, k, g.data(), n,
                                   acc_for(acc, b).data());
      return;
    }
    case OpId::kConv1d: {
      Conv1dGeom geo = conv1d_geometry(in[0], in[1], node.attrs);
      if (geo.stride == 1) {
        std::vector<double> xp;
        const double* xpp = in[0].data();
        int64_t lp = geo.l;
        if (node.attrs.same_pad) {
          xp = pad_rows(in[0].data(), geo.cin, geo.l, geo.lp, geo.pad_left);
          xpp = xp.data();
          lp = geo.lp;
        }
        if (wants(1))
          kernels::conv1d_backward_weight(xpp, geo.cin, lp, g.data(), geo.cout,
                                          geo.k, geo.lout,
                                          acc_for(acc, in[1]).data());
        if (wants(0)) {
          std::vector<double> dxp(static_cast<size_t>(geo.cin * geo.lp), 0.0);
          kernels::conv1d_backward_input(in[1].data(), geo.cout, geo.cin, geo.k,
                                         g.data(), geo.lout, dxp.data(),
                                         geo.lp);
          auto& dx = acc_for(acc, in[0]);
          for (int64_t ci = 0; ci < geo.cin; ++ci)
            for (int64_t t = 0; t < geo.l; ++t)
              dx[static_cast<size_t>(ci * geo.l + t)] +=
                  dxp[static_cast<size_t>(ci * geo.lp + t + geo.pad_left)];
        }
      } else {
        auto xp = pad_rows(in[0].data(), geo.cin, geo.l, geo.lp, geo.pad_left);
        const double* w = in[1].data();
        std::vector<double> dxp(static_cast<size_t>(geo.cin * geo.lp), 0.0);
        std::vector<double>* dw =
            wants(1) ? &acc_for(acc, in[1]) : nullptr;
        for (int64_t co = 0; co < geo.cout; ++co)
          for (int64_t t = 0; t < geo.lout; ++t) {
            double gv = g[static_cast<size_t>(co * geo.lout + t)];
            for (int64_t ci = 0; ci < geo.cin; ++ci)
              for (int64_t j = 0; j < geo.k; ++j) {
                int64_t xi = ci * geo.lp + t * geo.stride + j;
                if (dw)
                  (*dw)[static_cast<size_t>((co * geo.cin + ci) * geo.k + j)] +=
                      gv * xp[static_cast<size_t>(xi)];
                if (wants(0))
                  dxp[static_cast<size_t>(xi)] +=
                      gv * w[(co * geo.cin + ci) * geo.k + j];
              }
          }
        if (wants(0)) {
          auto& dx = acc_for(acc, in[0]);
          for (int64_t ci = 0; ci < geo.cin; ++ci)
            for (int64_t t = 0; t < geo.l; ++t)
              dx[static_cast<size_t>(ci * geo.l + t)] +=
                  dxp[static_cast<size_t>(ci * geo.lp + t + geo.pad_left)];
        }
      }
      return;
    }
    case OpId::kDwConv1d: {
      DwGeom geo = dw_geometry(in[0], in[1], node.attrs);
      std::vector<double> xp;
      const double* xpp = in[0].data();
      if (node.attrs.same_pad) {
        xp = pad_rows(in[0].data(), geo.c, geo.l, geo.lp, geo.pad_left);
        xpp = xp.data();
      }
      if (wants(1))
        kernels::dw_conv1d_backward_weight(xpp, geo.c, geo.lp, g.data(), geo.p,
                                           geo.stride, geo.lout,
                                           acc_for(acc, in[1]).data());
      if (wants(0)) {
        std::vector<double> dxp(static_cast<size_t>(geo.c * geo.lp), 0.0);
        kernels::dw_conv1d_backward_input(in[1].data(), geo.c, geo.p, g.data(),
                                          geo.stride, geo.lout, dxp.data(),
                                          geo.lp);
        auto& dx = acc_for(acc, in[0]);
        for (int64_t ci = 0; ci < geo.c; ++ci)
          for (int64_t t = 0; t < geo.l; ++t)
            dx[static_cast<size_t>(ci * geo.l + t)] +=
                dxp[static_cast<size_t>(ci * geo.lp + t + geo.pad_left)];
      }
      return;
    }
    case OpId::kConv2d: {
      Conv2dGeom geo = conv2d_geometry(in[0], in[1], node.attrs);
      std::vector<double> xp;
      const double* xpp = in[0].data();
      if (node.attrs.same_pad) {
        xp = pad_planes(in[0].data(), geo.cin, geo.h, geo.w, geo.hp, geo.wp,
                        geo.pad_top, geo.pad_left);
        xpp = xp.data();
      }
      if (wants(1))
        kernels::conv2d_backward_weight(xpp, geo.cin, geo.hp, geo.wp, g.data(),
                                        geo.cout, geo.kh, geo.kw, geo.ho,
                                        geo.wo, acc_for(acc, in[1]).data());
      if (wants(0)) {
        std::vector<double> dxp(static_cast<size_t>(geo.cin * geo.hp * geo.wp),
                                0.0);
        kernels::conv2d_backward_input(in[1].data(), geo.cout, geo.cin, geo.kh,
                                       geo.kw, g.data(), geo.ho, geo.wo,
                                       dxp.data(), geo.hp, geo.wp);
        auto& dx = acc_for(acc, in[0]);
        for (int64_t ci = 0; ci < geo.cin; ++ci)
          for (int64_t h = 0; h < geo.h; ++h)
            for (int64_t w = 0; w < geo.w; ++w)
              dx[static_cast<size_t>((ci * geo.h + h) * geo.w + w)] +=
                  dxp[static_cast<size_t>(((ci * geo.hp + h + geo.pad_top)) *
                                              geo.wp +
                                          w + geo.pad_left)];
      }
      return;
    }
    case OpId::kMaxPool:
    case OpId::kReduceMax: {
      if (!wants(0)) return;
      auto& dx = acc_for(acc, in[0]);
      for (size_t i = 0; i < g.size(); ++i) {
        int64_t src = node.saved_idx[i];
        if (src >= 0) dx[static_cast<size_t>(src)] += g[i];
      }
      return;
    }
    case OpId::kSumAll: {
      if (!wants(0)) return;
      auto& dx = acc_for(acc, in[0]);
      double gv = g[0];
      for (double& v : dx) v += gv;
      return;
    }
    case OpId::kSumAxis: {
      if (!wants(0)) return;
      AxisGeom geo = axis_geometry(in[0], attrs.i0, node.op);
      auto& dx = acc_for(acc, in[0]);
      for (int64_t ou = 0; ou < geo.outer; ++ou)
        for (int64_t d = 0; d < geo.d; ++d) {
          double* drow = dx.data() + (ou * geo.d + d) * geo.inner;
          const double* grow = g.data() + ou * geo.inner;
          for (int64_t inn = 0; inn < geo.inner; ++inn) drow[inn] += grow[inn];
        }
      return;
    }
    case OpId::kReshape: {
      if (!wants(0)) return;
      auto& dx = acc_for(acc, in[0]);
      for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      return;
    }
    case OpId::kTranspose: {
      if (!wants(0)) return;
      auto& dx = acc_for(acc, in[0]);
      int64_t rows = in[0].dim(0), cols = in[0].dim(1);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j)
          dx[static_cast<size_t>(i * cols + j)] +=
              g[static_cast<size_t>(j * rows + i)];
      return;
    }
    case OpId::kSelectIndex: {
      if (!wants(0)) return;
      AxisGeom geo = axis_geometry(in[0], attrs.i0, node.op);
      auto& dx = acc_for(acc, in[0]);
      for (int64_t ou = 0; ou < geo.outer; ++ou)
        for (int64_t inn = 0; inn < geo.inner; ++inn)
          dx[static_cast<size_t>((ou * geo.d + attrs.i1) * geo.inner + inn)] +=
              g[static_cast<size_t>(ou * geo.inner + inn)];
      return;
    }
    case OpId::kGatherRows: {
      if (!wants(0)) return;
      auto& dx = acc_for(acc, in[0]);
      int64_t cols = in[0].dim(1);
      for (size_t r = 0; r < attrs.ivec.size(); ++r) {
        int64_t src = attrs.ivec[r];
        for (int64_t c = 0; c < cols; ++c)
          dx[static_cast<size_t>(src * cols + c)] +=
              g[r * static_cast<size_t>(cols) + static_cast<size_t>(c)];
      }
      return;
    }
    case OpId::kPcen: {
      const Tensor& x = in[0];
      const Tensor& alpha = in[1];
      const Tensor& delta = in[2];
      const Tensor& rr = in[3];
      const Tensor& m = node.saved[0];
      const Tensor& u = node.saved[1];
      double s = attrs.f0, eps = attrs.f1;
      int64_t nch = x.dim(0), t = x.dim(1);
      std::vector<double>* dx = wants(0) ? &acc_for(acc, x) : nullptr;
      std::vector<double>* dalpha = wants(1) ? &acc_for(acc, alpha) : nullptr;
      std::vector<double>* ddelta = wants(2) ? &acc_for(acc, delta) : nullptr;
      std::vector<double>* dr = wants(3) ? &acc_for(acc, rr) : nullptr;
      std::vector<double> gm(static_cast<size_t>(t));
      for (int64_t n = 0; n < nch; ++n) {
        const double a = alpha.at(n), d = delta.at(n), re = rr.at(n);
        const double* xr = x.data() + n * t;
        const double* mr = m.data() + n * t;
        const double* ur = u.data() + n * t;
        const double* gr = g.data() + n * t;
        double ga = 0, gd = 0, gre = 0;
        const double log_d = d > 0 ? std::log(d) : 0.0;
        const double d_pow_r = std::pow(d, re);
        const double d_pow_rm1 = d > 0 ? std::pow(d, re - 1.0) : 0.0;
        std::fill(gm.begin(), gm.end(), 0.0);
        for (int64_t i = 0; i < t; ++i) {
          double v = xr[i] * ur[i] + d;
          double gv = gr[i] * re * std::pow(v, re - 1.0);
          if (dr) {
            double term_v = v > 0 ? std::pow(v, re) * std::log(v) : 0.0;
            double term_d = d > 0 ? d_pow_r * log_d : 0.0;
            gre += gr[i] * (term_v - term_d);
          }
          if (ddelta) gd += gv - gr[i] * re * d_pow_rm1;
          double gu = gv * xr[i];
          if (dx) (*dx)[static_cast<size_t>(n * t + i)] += gv * ur[i];
          if (dalpha) ga += gu * (-std::log(eps + mr[i]) * ur[i]);
          gm[static_cast<size_t>(i)] =
              gu * (-a * std::pow(eps + mr[i], -a - 1.0));
        }
        // EMA adjoint, reverse recursion.
        double carry = 0.0;
        for (int64_t i = t - 1; i >= 0; --i) {
          double total = gm[static_cast<size_t>(i)] + (1.0 - s) * carry;
          if (dx) {
            double w = i == 0 ? 1.0 : s;
            (*dx)[static_cast<size_t>(n * t + i)] += w * total;
          }
          carry = total;
        }
        if (dalpha) (*dalpha)[static_cast<size_t>(n)] += ga;
        if (ddelta) (*ddelta)[static_cast<size_t>(n)] += gd;
        if (dr) (*dr)[static_cast<size_t>(n)] += gre;
      }
      return;
    }
  }
  throw ContractError("backward_node: unhandled op");
}

void check_finite(OpId op, const Tensor& t) {
  const double* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(p[i]))
      throw NumericFault(std::string(op_name(op)) +
                         " produced a non-finite value at flat index " +
                         std::to_string(i));
}

}  // namespace

Tape* current_tape() { return t_current_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(t_current_tape) {
  t_current_tape = &tape;
}
TapeScope::~TapeScope() { t_current_tape = prev_; }

NoGradScope::NoGradScope() : prev_(t_current_tape) { t_current_tape = nullptr; }
NoGradScope::~NoGradScope() { t_current_tape = prev_; }

Tensor forward_primitive(OpId op, const std::vector<Tensor>& inputs,
                         OpAttrs attrs) {
  FwdResult r = forward_compute(op, inputs, attrs);
  check_finite(op, r.out);
  Tape* tape = t_current_tape;
  bool any_grad = false;
  for (const Tensor& t : inputs) any_grad = any_grad || t.requires_grad();
  if (tape && any_grad) {
    r.out.set_requires_grad(true);
    TapeNode node;
    node.op = op;
    node.attrs = std::move(attrs);
    node.inputs = inputs;
    node.output = r.out;
    node.saved = std::move(r.saved);
    node.saved_idx = std::move(r.saved_idx);
    tape->append(std::move(node));
  }
  return r.out;
}

const Tensor& GradMap::at(const Tensor& t) const {
  auto it = grads_.find(t.impl());
  if (it == grads_.end())
    throw ContractError("GradMap::at: no gradient recorded for tensor");
  return it->second;
}

Tensor GradMap::get(const Tensor& t) const {
  auto it = grads_.find(t.impl());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return it->second;
}

void GradMap::set(const Tensor& leaf, Tensor grad) {
  grads_[leaf.impl()] = std::move(grad);
}

void GradMap::add_scaled(const GradMap& other, double scale) {
  for (const auto& [key, grad] : other.grads_) {
    auto it = grads_.find(key);
    if (it == grads_.end()) {
      Tensor copy = grad.clone();
      double* p = copy.mutable_data();
      for (int64_t i = 0; i < copy.numel(); ++i) p[i] *= scale;
      grads_.emplace(key, std::move(copy));
    } else {
      double* p = it->second.mutable_data();
      const double* q = grad.data();
      for (int64_t i = 0; i < it->second.numel(); ++i) p[i] += scale * q[i];
    }
  }
}

GradMap Tape::backward(const Tensor& loss) {
  if (nodes_.empty()) throw ContractError("backward: tape is empty");
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  AccMap acc;
  acc[loss.impl()] = {1.0};

  std::unordered_set<const TensorImpl*> produced;
  for (const TapeNode& node : nodes_) produced.insert(node.output.impl());

  for (size_t i = nodes_.size(); i-- > 0;) {
    const TapeNode& node = nodes_[i];
    auto it = acc.find(node.output.impl());
    if (it == acc.end()) continue;
    backward_node(node, it->second, acc);
  }

  GradMap result;
  for (const TapeNode& node : nodes_) {
    for (const Tensor& t : node.inputs) {
      if (!t.requires_grad() || produced.count(t.impl())) continue;
      if (result.contains(t)) continue;
      auto it = acc.find(t.impl());
      if (it == acc.end()) {
        result.set(t, Tensor::zeros(t.shape()));
      } else {
        result.set(t, Tensor::from(it->second, t.shape()));
      }
    }
  }
  if (loss.requires_grad() && !produced.count(loss.impl()))
    result.set(loss, Tensor::scalar(1.0));
  nodes_.clear();
  return result;
}

}  // namespace gabornet
