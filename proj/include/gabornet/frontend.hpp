// Waveform ingestion: learnable filterbank convolution, squared modulus,
// Gaussian lowpass pooling, per-channel energy normalization, max pooling,
// BN+SELU. Produces the (channels, frames) map both backbones consume.
#pragma once

#include "gabornet/filterbank.hpp"
#include "gabornet/nn.hpp"

namespace gabornet {
namespace frontend {

// A feature map is a (channels, frames) tensor throughout.
using FeatureMap = Tensor;

struct PcenParams {
  Tensor alpha;  // (N,) smoothing exponents, trainable
  Tensor delta;  // (N,) offsets, trainable
  Tensor r;      // (N,) compression exponents in [0,1], trainable
  double s = 0.04;    // EMA coefficient
  double eps = 1e-6;  // stabilizer

  // alpha 0.96, delta 2.0, r 0.5: conventional trainable-PCEN defaults.
  static PcenParams defaults(int64_t n);
  void clamp();
};

struct GaussianPoolParams {
  Tensor sigma_p;  // (N,) pooling kernel widths, trainable
  int64_t kernel_len = 3;  // P, forced odd at construction
  int64_t stride = 3;
  ops::Pad pad = ops::Pad::kSame;

  static GaussianPoolParams make(int64_t n, int64_t p, int64_t stride,
                                 ops::Pad pad);
  void clamp();
};

FeatureMap squared_modulus(const ComplexTensor& z);

// Unit-sum Gaussian kernel per channel, then strided decimation (whole
// stride groups only). Differentiable in sigma_p.
FeatureMap gaussian_lowpass_pool(const FeatureMap& map,
                                 const GaussianPoolParams& params);

FeatureMap pcen(const FeatureMap& map, const PcenParams& params);

enum class FrontendKind { kGabor, kLeaf, kSinc };
enum class PoolAxis { kTime, kFilters };

struct FrontendConfig {
  FrontendKind kind = FrontendKind::kLeaf;
  int64_t num_filters = 20;
  int64_t kernel_len = 1024;
  double sample_rate = 16000;
  double mel_fmin = 0;
  double mel_fmax = 8000;
  // Gaussian pooling geometry (see the backbone defaults).
  int64_t pool_kernel_len = 1023;
  int64_t pool_stride = 3;
  ops::Pad pool_pad = ops::Pad::kSame;
  // Trailing max pool: over time (kernel 3 stride 1 same) or over the
  // filter axis (kernel 3 stride 3 valid).
  PoolAxis max_pool_axis = PoolAxis::kTime;
  int64_t max_pool_kernel = 3;
  int64_t max_pool_stride = 1;
  ops::Pad max_pool_pad = ops::Pad::kSame;
  // PCEN initialization (leaf frontends only).
  double pcen_alpha = 0.96;
  double pcen_delta = 2.0;
  double pcen_r = 0.5;
  double pcen_s = 0.04;
  double pcen_eps = 1e-6;
};

// Closed-form output geometry for a given input length.
int64_t output_channels(const FrontendConfig& cfg);
int64_t output_frames(const FrontendConfig& cfg, int64_t input_samples);

class Frontend {
 public:
  Frontend() = default;
  Frontend(const FrontendConfig& config, Rng& rng);

  // waveform: (L,). Output: (out_channels, frames).
  FeatureMap forward(const Tensor& waveform, nn::ForwardCtx& ctx);
  // Pipeline up to (and excluding) BN+SELU; exposed for inspection/tests.
  FeatureMap features_pre_bn(const Tensor& waveform) const;

  int64_t out_channels() const;
  void register_params(const std::string& prefix,
                       nn::ParamRegistry& reg) const;
  void clamp_params();

  const FrontendConfig& config() const { return cfg_; }
  const fb::GaborFilterbankParams& gabor() const { return gabor_; }
  const fb::SincFilterbankParams& sinc() const { return sinc_; }
  nn::BatchNorm& bn() { return bn_; }

 private:
  FrontendConfig cfg_;
  fb::GaborFilterbankParams gabor_;
  fb::SincFilterbankParams sinc_;
  GaussianPoolParams pool_;
  PcenParams pcen_;
  nn::BatchNorm bn_;
};

}  // namespace frontend
}  // namespace gabornet
