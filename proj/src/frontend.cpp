#include "gabornet/frontend.hpp"

#include <algorithm>
#include <cmath>

namespace gabornet {
namespace frontend {

namespace {
constexpr double kInvSqrtTwoPi = 0.39894228040143267793994605993438;
}

PcenParams PcenParams::defaults(int64_t n) {
  PcenParams p;
  p.alpha = Tensor::full({n}, 0.96).set_requires_grad(true);
  p.delta = Tensor::full({n}, 2.0).set_requires_grad(true);
  p.r = Tensor::full({n}, 0.5).set_requires_grad(true);
  return p;
}

void PcenParams::clamp() {
  double* a = alpha.mutable_data();
  double* d = delta.mutable_data();
  double* re = r.mutable_data();
  for (int64_t i = 0; i < alpha.numel(); ++i) {
    a[i] = std::max(a[i], 0.0);
    // delta >= 0 with a small floor so the delta^(r-1) backward term stays
    // finite for r < 1.
    d[i] = std::max(d[i], 1e-6);
    re[i] = std::min(std::max(re[i], 0.0), 1.0);
  }
}

GaussianPoolParams GaussianPoolParams::make(int64_t n, int64_t p,
                                            int64_t stride, ops::Pad pad) {
  if (p < 1) throw ConfigError("gaussian pool: kernel length must be >= 1");
  if (p % 2 == 0) --p;  // odd grid, one tap dropped
  GaussianPoolParams g;
  g.kernel_len = p;
  g.stride = stride;
  g.pad = pad;
  const double init = std::max(0.5, static_cast<double>(p) / 6.0);
  g.sigma_p = Tensor::full({n}, init).set_requires_grad(true);
  return g;
}

void GaussianPoolParams::clamp() {
  double* s = sigma_p.mutable_data();
  for (int64_t i = 0; i < sigma_p.numel(); ++i) s[i] = std::max(s[i], 0.1);
}

FeatureMap squared_modulus(const ComplexTensor& z) {
  return ops::add(ops::mul(z.real, z.real), ops::mul(z.imag, z.imag));
}

FeatureMap gaussian_lowpass_pool(const FeatureMap& map,
                                 const GaussianPoolParams& params) {
  const int64_t n = map.dim(0);
  if (params.sigma_p.dim(0) != n)
    throw ContractError("gaussian_lowpass_pool: map has " + std::to_string(n) +
                        " channels, params carry " +
                        std::to_string(params.sigma_p.dim(0)));
  const int64_t p = params.kernel_len;
  Tensor taps = Tensor::from(fb::tap_grid(p), {1, p});
  Tensor taps_sq = ops::mul(taps, taps);
  Tensor sigma_col = ops::reshape(params.sigma_p, {n, 1});
  Tensor two_sigma_sq = ops::mul_scalar(ops::mul(sigma_col, sigma_col), 2.0);
  Tensor kernel = ops::mul_scalar(
      ops::exp(ops::neg(ops::divide(taps_sq, two_sigma_sq))), kInvSqrtTwoPi);
  Tensor unit = ops::divide(kernel, ops::sum_axis(kernel, 1, true));
  return ops::dw_conv1d(map, unit, params.stride, params.pad);
}

FeatureMap pcen(const FeatureMap& map, const PcenParams& params) {
  return ops::pcen(map, params.alpha, params.delta, params.r, params.s,
                   params.eps);
}

int64_t output_channels(const FrontendConfig& cfg) {
  if (cfg.max_pool_axis == PoolAxis::kFilters)
    return (cfg.num_filters - cfg.max_pool_kernel) / cfg.max_pool_stride + 1;
  return cfg.num_filters;
}

int64_t output_frames(const FrontendConfig& cfg, int64_t input_samples) {
  int64_t frames = input_samples - cfg.kernel_len + 1;  // valid conv
  if (frames < 1)
    throw ConfigError("frontend: input shorter than the conv kernel");
  int64_t p = cfg.pool_kernel_len % 2 == 0 ? cfg.pool_kernel_len - 1
                                           : cfg.pool_kernel_len;
  int64_t stride1 = cfg.pool_pad == ops::Pad::kSame ? frames : frames - p + 1;
  frames = stride1 / cfg.pool_stride;
  if (cfg.max_pool_axis == PoolAxis::kTime) {
    if (cfg.max_pool_pad == ops::Pad::kSame) {
      frames = (frames + cfg.max_pool_stride - 1) / cfg.max_pool_stride;
    } else {
      frames = (frames - cfg.max_pool_kernel) / cfg.max_pool_stride + 1;
    }
  }
  return frames;
}

Frontend::Frontend(const FrontendConfig& config, Rng& rng) : cfg_(config) {
  (void)rng;  // filterbank init is deterministic (mel scale)
  if (cfg_.kind == FrontendKind::kSinc) {
    sinc_ = fb::SincFilterbankParams::mel_initialized(
        cfg_.num_filters, cfg_.kernel_len, cfg_.sample_rate, cfg_.mel_fmin,
        cfg_.mel_fmax);
  } else {
    gabor_ = fb::GaborFilterbankParams::mel_initialized(
        cfg_.num_filters, cfg_.kernel_len, cfg_.sample_rate, cfg_.mel_fmin,
        cfg_.mel_fmax);
  }
  pool_ = GaussianPoolParams::make(cfg_.num_filters, cfg_.pool_kernel_len,
                                   cfg_.pool_stride, cfg_.pool_pad);
  if (cfg_.kind == FrontendKind::kLeaf) {
    pcen_ = PcenParams::defaults(cfg_.num_filters);
    pcen_.alpha = Tensor::full({cfg_.num_filters}, cfg_.pcen_alpha)
                      .set_requires_grad(true);
    pcen_.delta = Tensor::full({cfg_.num_filters}, cfg_.pcen_delta)
                      .set_requires_grad(true);
    pcen_.r =
        Tensor::full({cfg_.num_filters}, cfg_.pcen_r).set_requires_grad(true);
    pcen_.s = cfg_.pcen_s;
    pcen_.eps = cfg_.pcen_eps;
  }
  bn_ = nn::BatchNorm(out_channels());
}

int64_t Frontend::out_channels() const { return output_channels(cfg_); }

FeatureMap Frontend::features_pre_bn(const Tensor& waveform) const {
  if (waveform.rank() != 1)
    throw ContractError("frontend: expected a mono waveform (L,), got " +
                        shape_to_string(waveform.shape()));
  if (waveform.dim(0) < cfg_.kernel_len)
    throw ConfigError("frontend: waveform of " +
                      std::to_string(waveform.dim(0)) +
                      " samples is shorter than the " +
                      std::to_string(cfg_.kernel_len) + "-tap kernels");
  const int64_t n = cfg_.num_filters;
  const int64_t w = cfg_.kernel_len;
  Tensor x = ops::reshape(waveform, {1, waveform.dim(0)});

  FeatureMap energy;
  if (cfg_.kind == FrontendKind::kSinc) {
    Tensor k = ops::reshape(fb::sinc_kernels(sinc_), {n, 1, w});
    Tensor y = ops::conv1d(x, k, 1, ops::Pad::kValid);
    energy = ops::mul(y, y);
  } else {
    ComplexTensor k = fb::gabor_kernels(gabor_);
    Tensor yr = ops::conv1d(x, ops::reshape(k.real, {n, 1, w}), 1,
                            ops::Pad::kValid);
    Tensor yi = ops::conv1d(x, ops::reshape(k.imag, {n, 1, w}), 1,
                            ops::Pad::kValid);
    energy = squared_modulus(ComplexTensor(yr, yi));
  }
  FeatureMap pooled = gaussian_lowpass_pool(energy, pool_);
  if (cfg_.kind == FrontendKind::kLeaf) pooled = pcen(pooled, pcen_);
  const int64_t axis = cfg_.max_pool_axis == PoolAxis::kFilters ? 0 : 1;
  return ops::max_pool(pooled, axis, cfg_.max_pool_kernel,
                       cfg_.max_pool_stride, cfg_.max_pool_pad);
}

FeatureMap Frontend::forward(const Tensor& waveform,
                             nn::ForwardCtx& ctx) {
  return ops::selu(bn_.forward(features_pre_bn(waveform), ctx));
}

void Frontend::register_params(const std::string& prefix,
                               nn::ParamRegistry& reg) const {
  if (cfg_.kind == FrontendKind::kSinc) {
    reg.add(prefix + ".sinc.f1", sinc_.f1, true);
    reg.add(prefix + ".sinc.f2", sinc_.f2, true);
  } else {
    reg.add(prefix + ".gabor.eta", gabor_.eta, true);
    reg.add(prefix + ".gabor.sigma", gabor_.sigma, true);
  }
  reg.add(prefix + ".pool.sigma_p", pool_.sigma_p, true);
  if (cfg_.kind == FrontendKind::kLeaf) {
    reg.add(prefix + ".pcen.alpha", pcen_.alpha, true);
    reg.add(prefix + ".pcen.delta", pcen_.delta, true);
    reg.add(prefix + ".pcen.r", pcen_.r, true);
  }
  bn_.register_params(prefix + ".bn", reg);
}

void Frontend::clamp_params() {
  if (cfg_.kind == FrontendKind::kSinc) {
    sinc_.clamp();
  } else {
    gabor_.clamp();
  }
  pool_.clamp();
  if (cfg_.kind == FrontendKind::kLeaf) pcen_.clamp();
}

}  // namespace frontend
}  // namespace gabornet
