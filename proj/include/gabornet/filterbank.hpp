// Trainable sinc and complex Gabor filterbanks: mel-scale initialization,
// kernel generation (differentiable through the tensor core), and frequency
// response analysis.
#pragma once

#include "gabornet/tensor.hpp"

namespace gabornet {
namespace fb {

struct MelScale {
  std::vector<double> center_hz;     // strictly increasing, inside (f_min, f_max)
  std::vector<double> bandwidth_hz;  // triangular filter widths
};

// N triangular-filter centers equally spaced on mel(f) = 2595 log10(1+f/700).
MelScale mel_init(int64_t n, double sample_rate, double f_min, double f_max);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Centered integer tap grid with exactly W points; even W drops the +W/2 tap.
std::vector<double> tap_grid(int64_t w);

struct GaborFilterbankParams {
  Tensor eta;    // (N,) center frequencies, cycles/sample, trainable
  Tensor sigma;  // (N,) inverse bandwidths in samples, trainable
  int64_t kernel_len = 0;
  int64_t num_filters = 0;
  double sample_rate = 16000;

  static GaborFilterbankParams mel_initialized(int64_t n, int64_t w,
                                               double sample_rate,
                                               double f_min, double f_max);
  // Post-optimizer-step projection: eta into (0, 0.5), sigma >= 4/W.
  void clamp();
};

struct SincFilterbankParams {
  Tensor f1;  // (N,) low cutoffs in Hz, trainable
  Tensor f2;  // (N,) high cutoffs in Hz, trainable
  int64_t kernel_len = 0;
  int64_t num_filters = 0;
  double sample_rate = 16000;
  std::vector<double> window;  // length W, Hamming by default

  static SincFilterbankParams mel_initialized(int64_t n, int64_t w,
                                              double sample_rate, double f_min,
                                              double f_max);
  // abs + 50 Hz minimum bandwidth, keeping 0 <= f1 < f2 <= sample_rate/2.
  void clamp();
};

std::vector<double> hamming_window(int64_t w);
std::vector<double> rectangular_window(int64_t w);

// Kernel n at tap t: e^{-i 2 pi eta_n t} * exp(-t^2/(2 sigma_n^2)) /
// (sqrt(2 pi) sigma_n); rows are filters. Differentiable in eta and sigma.
ComplexTensor gabor_kernels(const GaborFilterbankParams& params);

// Windowed bandpass difference of sincs, normalized cutoffs f/sample_rate.
// Differentiable in f1 and f2.
Tensor sinc_kernels(const SincFilterbankParams& params);

struct FrequencyResponse {
  std::vector<double> magnitudes;  // bins 0..n_fft/2
  double bin_hz = 0;
};

FrequencyResponse frequency_response(const std::vector<double>& kernel,
                                     int64_t n_fft, double sample_rate);
FrequencyResponse frequency_response_complex(const std::vector<double>& re,
                                             const std::vector<double>& im,
                                             int64_t n_fft, double sample_rate);

// Row n of a generated bank, as plain vectors for analysis.
std::vector<double> kernel_row(const Tensor& bank, int64_t n);

struct LeakageMetrics {
  double sidelobe_db;  // peak stopband vs peak passband; -300 sentinel floor
  double ripple_db;    // max-min passband magnitude in dB
};

LeakageMetrics leakage_metrics(const FrequencyResponse& response,
                               double passband_lo_hz, double passband_hi_hz);

}  // namespace fb
}  // namespace gabornet
