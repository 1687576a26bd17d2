#include "gabornet/filterbank.hpp"

#include <algorithm>
#include <cmath>

#include "gabornet/fft.hpp"
#include "gabornet/ops.hpp"

namespace gabornet {
namespace fb {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInvSqrtTwoPi = 0.39894228040143267793994605993438;
}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelScale mel_init(int64_t n, double sample_rate, double f_min, double f_max) {
  if (n < 1) throw ConfigError("mel_init: need at least one filter");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw ConfigError("mel_init: invalid band [" + std::to_string(f_min) +
                      ", " + std::to_string(f_max) + "] at sample rate " +
                      std::to_string(sample_rate));
  const double m_lo = hz_to_mel(f_min);
  const double m_hi = hz_to_mel(f_max);
  const double step = (m_hi - m_lo) / static_cast<double>(n + 1);
  MelScale out;
  out.center_hz.resize(static_cast<size_t>(n));
  out.bandwidth_hz.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double m_prev = m_lo + step * static_cast<double>(i);
    const double m_center = m_lo + step * static_cast<double>(i + 1);
    const double m_next = m_lo + step * static_cast<double>(i + 2);
    out.center_hz[static_cast<size_t>(i)] = mel_to_hz(m_center);
    out.bandwidth_hz[static_cast<size_t>(i)] =
        mel_to_hz(m_next) - mel_to_hz(m_prev);
  }
  return out;
}

std::vector<double> tap_grid(int64_t w) {
  if (w < 1) throw ConfigError("tap_grid: kernel length must be >= 1");
  std::vector<double> t(static_cast<size_t>(w));
  // Odd W: -(W-1)/2 .. (W-1)/2.  Even W: -W/2 .. W/2-1 (the +W/2 tap is
  // dropped so the grid keeps exactly W points).
  const int64_t lo = -(w / 2);
  for (int64_t i = 0; i < w; ++i)
    t[static_cast<size_t>(i)] = static_cast<double>(lo + i);
  return t;
}

GaborFilterbankParams GaborFilterbankParams::mel_initialized(
    int64_t n, int64_t w, double sample_rate, double f_min, double f_max) {
  MelScale mel = mel_init(n, sample_rate, f_min, f_max);
  GaborFilterbankParams p;
  p.kernel_len = w;
  p.num_filters = n;
  p.sample_rate = sample_rate;
  std::vector<double> eta(static_cast<size_t>(n));
  std::vector<double> sigma(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    eta[static_cast<size_t>(i)] =
        mel.center_hz[static_cast<size_t>(i)] / sample_rate;
    sigma[static_cast<size_t>(i)] =
        sample_rate / (kTwoPi * mel.bandwidth_hz[static_cast<size_t>(i)]);
  }
  p.eta = Tensor::from(std::move(eta), {n}).set_requires_grad(true);
  p.sigma = Tensor::from(std::move(sigma), {n}).set_requires_grad(true);
  p.clamp();
  return p;
}

void GaborFilterbankParams::clamp() {
  constexpr double kEtaMargin = 1e-5;
  double* e = eta.mutable_data();
  double* s = sigma.mutable_data();
  const double sigma_floor = 4.0 / static_cast<double>(kernel_len);
  for (int64_t i = 0; i < num_filters; ++i) {
    e[i] = std::min(std::max(e[i], kEtaMargin), 0.5 - kEtaMargin);
    s[i] = std::max(s[i], sigma_floor);
  }
}

std::vector<double> hamming_window(int64_t w) {
  std::vector<double> win(static_cast<size_t>(w));
  if (w == 1) {
    win[0] = 1.0;
    return win;
  }
  for (int64_t i = 0; i < w; ++i)
    win[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(i) /
                               static_cast<double>(w - 1));
  return win;
}

std::vector<double> rectangular_window(int64_t w) {
  return std::vector<double>(static_cast<size_t>(w), 1.0);
}

SincFilterbankParams SincFilterbankParams::mel_initialized(int64_t n,
                                                           int64_t w,
                                                           double sample_rate,
                                                           double f_min,
                                                           double f_max) {
  MelScale mel = mel_init(n, sample_rate, f_min, f_max);
  SincFilterbankParams p;
  p.kernel_len = w;
  p.num_filters = n;
  p.sample_rate = sample_rate;
  p.window = hamming_window(w);
  std::vector<double> f1(static_cast<size_t>(n));
  std::vector<double> f2(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double c = mel.center_hz[static_cast<size_t>(i)];
    const double half = mel.bandwidth_hz[static_cast<size_t>(i)] / 2.0;
    f1[static_cast<size_t>(i)] = std::max(0.0, c - half);
    f2[static_cast<size_t>(i)] = std::min(sample_rate / 2.0, c + half);
  }
  p.f1 = Tensor::from(std::move(f1), {n}).set_requires_grad(true);
  p.f2 = Tensor::from(std::move(f2), {n}).set_requires_grad(true);
  p.clamp();
  return p;
}

void SincFilterbankParams::clamp() {
  constexpr double kMinBandHz = 50.0;
  const double nyquist = sample_rate / 2.0;
  double* lo = f1.mutable_data();
  double* hi = f2.mutable_data();
  for (int64_t i = 0; i < num_filters; ++i) {
    lo[i] = std::min(std::fabs(lo[i]), nyquist - kMinBandHz);
    hi[i] = std::min(std::max(std::fabs(hi[i]), lo[i] + kMinBandHz), nyquist);
  }
}

ComplexTensor gabor_kernels(const GaborFilterbankParams& params) {
  const int64_t n = params.num_filters;
  const int64_t w = params.kernel_len;
  Tensor t = Tensor::from(tap_grid(w), {1, w});
  Tensor t_sq = ops::mul(t, t);
  Tensor eta_col = ops::reshape(params.eta, {n, 1});
  Tensor sigma_col = ops::reshape(params.sigma, {n, 1});

  Tensor phase = ops::mul_scalar(ops::mul(eta_col, t), kTwoPi);
  Tensor two_sigma_sq = ops::mul_scalar(ops::mul(sigma_col, sigma_col), 2.0);
  Tensor envelope = ops::mul(
      ops::divide(Tensor::scalar(kInvSqrtTwoPi), sigma_col),
      ops::exp(ops::neg(ops::divide(t_sq, two_sigma_sq))));
  Tensor real = ops::mul(ops::cos(phase), envelope);
  Tensor imag = ops::mul(ops::neg(ops::sin(phase)), envelope);
  return ComplexTensor(real, imag);
}

Tensor sinc_kernels(const SincFilterbankParams& params) {
  const int64_t n = params.num_filters;
  const int64_t w = params.kernel_len;
  if (static_cast<int64_t>(params.window.size()) != w)
    throw ContractError("sinc_kernels: window length " +
                        std::to_string(params.window.size()) +
                        " != kernel length " + std::to_string(w));
  std::vector<double> taps = tap_grid(w);
  int64_t center = -1;
  std::vector<double> inv_pi_t(static_cast<size_t>(w));
  std::vector<double> center_mask(static_cast<size_t>(w), 0.0);
  for (int64_t i = 0; i < w; ++i) {
    if (taps[static_cast<size_t>(i)] == 0.0) {
      center = i;
      inv_pi_t[static_cast<size_t>(i)] = 0.0;
    } else {
      inv_pi_t[static_cast<size_t>(i)] =
          1.0 / (M_PI * taps[static_cast<size_t>(i)]);
    }
  }
  if (center >= 0) center_mask[static_cast<size_t>(center)] = 2.0;

  Tensor t = Tensor::from(taps, {1, w});
  Tensor inv_pit = Tensor::from(inv_pi_t, {1, w});
  Tensor cmask = Tensor::from(center_mask, {1, w});
  Tensor win = Tensor::from(params.window, {1, w});

  // 2 f2 sinc(2 pi f2 t) - 2 f1 sinc(2 pi f1 t)
  //   = (sin(2 pi f2 t) - sin(2 pi f1 t)) / (pi t), center tap 2 (f2 - f1);
  // cutoffs normalized by the sample rate.
  Tensor f1n = ops::reshape(
      ops::mul_scalar(params.f1, 1.0 / params.sample_rate), {n, 1});
  Tensor f2n = ops::reshape(
      ops::mul_scalar(params.f2, 1.0 / params.sample_rate), {n, 1});
  Tensor osc = ops::sub(ops::sin(ops::mul_scalar(ops::mul(f2n, t), kTwoPi)),
                        ops::sin(ops::mul_scalar(ops::mul(f1n, t), kTwoPi)));
  Tensor band = ops::mul(ops::sub(f2n, f1n), cmask);
  Tensor kernel = ops::add(ops::mul(osc, inv_pit), band);
  return ops::mul(kernel, win);
}

FrequencyResponse frequency_response_complex(const std::vector<double>& re,
                                             const std::vector<double>& im,
                                             int64_t n_fft,
                                             double sample_rate) {
  const int64_t w = static_cast<int64_t>(re.size());
  if (im.size() != re.size())
    throw ContractError("frequency_response: real/imag length mismatch");
  if (n_fft < w)
    throw ConfigError("frequency_response: n_fft " + std::to_string(n_fft) +
                      " shorter than kernel length " + std::to_string(w));
  if (!is_power_of_two(n_fft))
    throw ConfigError("frequency_response: n_fft must be a power of two");
  // The frontend applies kernels in correlation form (out[t] = sum_k
  // x[t+k] w[k]), whose gain at +f is sum_k w_k e^{+i 2 pi f k}. That is the
  // FFT of the conjugated kernel, so the analytic Gabor peak lands at +eta.
  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft),
                                        {0.0, 0.0});
  for (int64_t i = 0; i < w; ++i)
    buf[static_cast<size_t>(i)] = {re[static_cast<size_t>(i)],
                                   -im[static_cast<size_t>(i)]};
  fft(buf);
  FrequencyResponse resp;
  resp.bin_hz = sample_rate / static_cast<double>(n_fft);
  resp.magnitudes.resize(static_cast<size_t>(n_fft / 2 + 1));
  for (int64_t b = 0; b <= n_fft / 2; ++b)
    resp.magnitudes[static_cast<size_t>(b)] =
        std::abs(buf[static_cast<size_t>(b)]);
  return resp;
}

FrequencyResponse frequency_response(const std::vector<double>& kernel,
                                     int64_t n_fft, double sample_rate) {
  return frequency_response_complex(
      kernel, std::vector<double>(kernel.size(), 0.0), n_fft, sample_rate);
}

std::vector<double> kernel_row(const Tensor& bank, int64_t n) {
  const int64_t w = bank.dim(1);
  std::vector<double> row(static_cast<size_t>(w));
  for (int64_t i = 0; i < w; ++i) row[static_cast<size_t>(i)] = bank.at(n, i);
  return row;
}

LeakageMetrics leakage_metrics(const FrequencyResponse& response,
                               double passband_lo_hz, double passband_hi_hz) {
  const int64_t bins = static_cast<int64_t>(response.magnitudes.size());
  const double nyquist = response.bin_hz * static_cast<double>(bins - 1);
  if (!(passband_lo_hz >= 0.0 && passband_lo_hz < passband_hi_hz &&
        passband_hi_hz <= nyquist))
    throw ConfigError("leakage_metrics: passband [" +
                      std::to_string(passband_lo_hz) + ", " +
                      std::to_string(passband_hi_hz) +
                      "] outside [0, nyquist]");
  double pass_peak = 0, pass_min = -1, stop_peak = 0;
  int64_t pass_count = 0;
  for (int64_t b = 0; b < bins; ++b) {
    const double f = response.bin_hz * static_cast<double>(b);
    const double mag = response.magnitudes[static_cast<size_t>(b)];
    if (f >= passband_lo_hz && f <= passband_hi_hz) {
      ++pass_count;
      pass_peak = std::max(pass_peak, mag);
      pass_min = pass_min < 0 ? mag : std::min(pass_min, mag);
    } else {
      stop_peak = std::max(stop_peak, mag);
    }
  }
  if (pass_count == 0)
    throw ConfigError("leakage_metrics: passband covers no FFT bins");
  constexpr double kFloorDb = -300.0;
  LeakageMetrics m;
  if (stop_peak <= 0.0 || pass_peak <= 0.0) {
    m.sidelobe_db = kFloorDb;
  } else {
    m.sidelobe_db = std::max(kFloorDb, 20.0 * std::log10(stop_peak / pass_peak));
  }
  if (pass_min <= 0.0) {
    m.ripple_db = -kFloorDb;
  } else {
    m.ripple_db = 20.0 * std::log10(pass_peak / pass_min);
  }
  return m;
}

}  // namespace fb
}  // namespace gabornet
