#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gabornet/filterbank.hpp"
#include "gabornet/ops.hpp"
#include "testing_util.hpp"

using namespace gabornet;
namespace tu = testing_util;

namespace {
// Independent evaluation of the pinned mel map for the oracle values.
double oracle_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double oracle_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

int64_t argmax(const std::vector<double>& v) {
  int64_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int64_t>(i);
  return best;
}

// Contiguous -3 dB width (in bins) around the response peak.
double half_power_width(const std::vector<double>& mags) {
  int64_t peak = argmax(mags);
  double thresh = mags[static_cast<size_t>(peak)] / std::sqrt(2.0);
  int64_t lo = peak, hi = peak;
  while (lo > 0 && mags[static_cast<size_t>(lo - 1)] >= thresh) --lo;
  while (hi + 1 < static_cast<int64_t>(mags.size()) &&
         mags[static_cast<size_t>(hi + 1)] >= thresh)
    ++hi;
  return static_cast<double>(hi - lo + 1);
}

// Main lobe = contiguous region around the peak above peak/100 (-40 dB).
// Returns false when the contour runs into DC or Nyquist, i.e. the lobe is
// not fully observable and a sidelobe level is ill-defined.
bool main_lobe_bounds(const fb::FrequencyResponse& r, double* lo_hz,
                      double* hi_hz) {
  const auto& m = r.magnitudes;
  int64_t peak = argmax(m);
  double thresh = m[static_cast<size_t>(peak)] * 1e-2;
  int64_t lo = peak, hi = peak;
  while (lo > 0 && m[static_cast<size_t>(lo - 1)] >= thresh) --lo;
  while (hi + 1 < static_cast<int64_t>(m.size()) &&
         m[static_cast<size_t>(hi + 1)] >= thresh)
    ++hi;
  *lo_hz = static_cast<double>(lo) * r.bin_hz;
  *hi_hz = static_cast<double>(hi) * r.bin_hz;
  return lo > 0 && hi + 1 < static_cast<int64_t>(m.size());
}
}  // namespace

TEST_CASE("mel_init single filter lands at the mel midpoint") {
  fb::MelScale m = fb::mel_init(1, 16000, 0, 8000);
  const double expected = oracle_hz(oracle_mel(8000.0) / 2.0);
  CHECK(std::fabs(m.center_hz[0] - expected) < 1.0);
}

TEST_CASE("mel_init centers are strictly increasing and inside the band") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t n = rng.uniform_int(1, 80);
    double f_min = rng.uniform(0, 500);
    double f_max = rng.uniform(f_min + 1000, 8000);
    fb::MelScale m = fb::mel_init(n, 16000, f_min, f_max);
    REQUIRE(static_cast<int64_t>(m.center_hz.size()) == n);
    double prev = f_min;
    for (double c : m.center_hz) {
      CHECK(c > prev);
      CHECK(c < f_max);
      prev = c;
    }
    for (double bw : m.bandwidth_hz) CHECK(bw > 0);
  }
  // the paper-scale configuration
  fb::MelScale m70 = fb::mel_init(70, 16000, 0, 8000);
  CHECK(m70.center_hz.size() == 70);
}

TEST_CASE("mel_init rejects bad arguments") {
  CHECK_THROWS_AS(fb::mel_init(0, 16000, 0, 8000), ConfigError);
  CHECK_THROWS_AS(fb::mel_init(5, 16000, 4000, 1000), ConfigError);
  CHECK_THROWS_AS(fb::mel_init(5, 16000, 0, 9000), ConfigError);
}

TEST_CASE("gabor kernel center tap and symmetry") {
  auto p = fb::GaborFilterbankParams::mel_initialized(4, 129, 16000, 0, 8000);
  ComplexTensor k = fb::gabor_kernels(p);
  const int64_t center = 64;  // tap t=0 for W=129
  for (int64_t n = 0; n < 4; ++n) {
    double expect = 1.0 / (std::sqrt(2.0 * M_PI) * p.sigma.at(n));
    CHECK(k.real.at(n, center) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::fabs(k.imag.at(n, center)) < 1e-15);
    for (int64_t d = 1; d <= 64; ++d) {
      double m_pos = std::hypot(k.real.at(n, center + d), k.imag.at(n, center + d));
      double m_neg = std::hypot(k.real.at(n, center - d), k.imag.at(n, center - d));
      CHECK(m_pos == doctest::Approx(m_neg).epsilon(1e-10));
    }
  }
}

TEST_CASE("gabor kernels match a scalar reimplementation of the equation") {
  Rng rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    int64_t n = rng.uniform_int(1, 5);
    int64_t w = rng.uniform_int(8, 160);
    fb::GaborFilterbankParams p;
    p.num_filters = n;
    p.kernel_len = w;
    p.eta = Tensor::uniform(rng, {n}, 0.01, 0.49);
    p.sigma = Tensor::uniform(rng, {n}, 1.0, 40.0);
    ComplexTensor k = fb::gabor_kernels(p);
    std::vector<double> taps = fb::tap_grid(w);
    for (int64_t f = 0; f < n; ++f) {
      const double eta = p.eta.at(f), sigma = p.sigma.at(f);
      for (int64_t i = 0; i < w; ++i) {
        const double t = taps[static_cast<size_t>(i)];
        const double env = std::exp(-t * t / (2.0 * sigma * sigma)) /
                           (std::sqrt(2.0 * M_PI) * sigma);
        const double re = std::cos(2.0 * M_PI * eta * t) * env;
        const double im = -std::sin(2.0 * M_PI * eta * t) * env;
        CHECK(std::fabs(k.real.at(f, i) - re) < 1e-12);
        CHECK(std::fabs(k.imag.at(f, i) - im) < 1e-12);
      }
    }
  }
}

TEST_CASE("gabor response peaks in the bin containing eta * sample_rate") {
  fb::GaborFilterbankParams p;
  p.num_filters = 1;
  p.kernel_len = 129;
  p.sample_rate = 16000;
  p.eta = Tensor::from({0.1}, {1});
  p.sigma = Tensor::from({20.0}, {1});
  ComplexTensor k = fb::gabor_kernels(p);
  auto resp = fb::frequency_response_complex(fb::kernel_row(k.real, 0),
                                             fb::kernel_row(k.imag, 0), 4096,
                                             16000);
  double target_bin = 0.1 * 16000 / resp.bin_hz;
  CHECK(std::fabs(static_cast<double>(argmax(resp.magnitudes)) - target_bin) <=
        1.0);
}

TEST_CASE("mel-initialized gabor bank has nondecreasing response peaks") {
  auto p = fb::GaborFilterbankParams::mel_initialized(20, 1024, 16000, 0, 8000);
  ComplexTensor k = fb::gabor_kernels(p);
  int64_t prev = -1;
  for (int64_t n = 0; n < 20; ++n) {
    auto resp = fb::frequency_response_complex(fb::kernel_row(k.real, n),
                                               fb::kernel_row(k.imag, n), 4096,
                                               16000);
    int64_t peak = argmax(resp.magnitudes);
    CHECK(peak >= prev);
    prev = peak;
  }
}

TEST_CASE("doubling sigma halves the -3 dB bandwidth within 15 percent") {
  for (double sigma : {12.0, 20.0}) {
    fb::GaborFilterbankParams p;
    p.num_filters = 2;
    p.kernel_len = 257;
    p.eta = Tensor::from({0.15, 0.15}, {2});
    p.sigma = Tensor::from({sigma, 2.0 * sigma}, {2});
    ComplexTensor k = fb::gabor_kernels(p);
    auto r1 = fb::frequency_response_complex(fb::kernel_row(k.real, 0),
                                             fb::kernel_row(k.imag, 0), 8192,
                                             16000);
    auto r2 = fb::frequency_response_complex(fb::kernel_row(k.real, 1),
                                             fb::kernel_row(k.imag, 1), 8192,
                                             16000);
    double ratio = half_power_width(r1.magnitudes) /
                   half_power_width(r2.magnitudes);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.15));
  }
}

TEST_CASE("sinc kernel reduces to a windowed lowpass when f1 = 0") {
  fb::SincFilterbankParams p;
  p.num_filters = 1;
  p.kernel_len = 65;
  p.sample_rate = 16000;
  p.window = fb::hamming_window(65);
  p.f1 = Tensor::from({0.0}, {1});
  p.f2 = Tensor::from({2000.0}, {1});
  Tensor k = fb::sinc_kernels(p);
  std::vector<double> taps = fb::tap_grid(65);
  const double f2n = 2000.0 / 16000.0;
  for (int64_t i = 0; i < 65; ++i) {
    const double t = taps[static_cast<size_t>(i)];
    double expect = t == 0.0 ? 2.0 * f2n
                             : std::sin(2.0 * M_PI * f2n * t) / (M_PI * t);
    expect *= p.window[static_cast<size_t>(i)];
    CHECK(std::fabs(k.at(0, i) - expect) < 1e-12);
  }
}

TEST_CASE("sinc kernels are even in the tap index") {
  auto p = fb::SincFilterbankParams::mel_initialized(6, 129, 16000, 0, 8000);
  Tensor k = fb::sinc_kernels(p);
  for (int64_t n = 0; n < 6; ++n)
    for (int64_t d = 1; d <= 64; ++d)
      CHECK(k.at(n, 64 + d) == doctest::Approx(k.at(n, 64 - d)).epsilon(1e-12));
}

TEST_CASE("sinc band 1000-2000 Hz separates passband from stopband by 20 dB") {
  fb::SincFilterbankParams p;
  p.num_filters = 1;
  p.kernel_len = 129;
  p.sample_rate = 16000;
  p.window = fb::hamming_window(129);
  p.f1 = Tensor::from({1000.0}, {1});
  p.f2 = Tensor::from({2000.0}, {1});
  Tensor k = fb::sinc_kernels(p);
  auto resp = fb::frequency_response(fb::kernel_row(k, 0), 4096, 16000);
  auto mag_at = [&](double hz) {
    return resp.magnitudes[static_cast<size_t>(std::llround(hz / resp.bin_hz))];
  };
  CHECK(20.0 * std::log10(mag_at(1500) / mag_at(4000)) >= 20.0);
}

TEST_CASE("sinc clamp enforces ordering and the 50 Hz minimum band") {
  fb::SincFilterbankParams p;
  p.num_filters = 3;
  p.kernel_len = 65;
  p.sample_rate = 16000;
  p.window = fb::hamming_window(65);
  p.f1 = Tensor::from({-300.0, 5000.0, 7990.0}, {3});
  p.f2 = Tensor::from({310.0, 4950.0, -20.0}, {3});
  p.clamp();
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(p.f1.at(i) >= 0.0);
    CHECK(p.f2.at(i) - p.f1.at(i) >= 50.0 - 1e-9);
    CHECK(p.f2.at(i) <= 8000.0);
  }
}

TEST_CASE("frequency_response basics") {
  std::vector<double> impulse(32, 0.0);
  impulse[0] = 1.0;
  auto flat = fb::frequency_response(impulse, 32, 16000);
  for (double m : flat.magnitudes) CHECK(m == doctest::Approx(1.0));

  auto two = fb::frequency_response({1.0, 1.0}, 32, 16000);
  CHECK(two.magnitudes.front() == doctest::Approx(2.0));
  CHECK(two.magnitudes.back() == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(fb::frequency_response(std::vector<double>(40, 1.0), 32,
                                         16000),
                  ConfigError);
  CHECK_THROWS_AS(fb::frequency_response(std::vector<double>(8, 1.0), 24,
                                         16000),
                  ConfigError);
}

TEST_CASE("gabor main lobe is unimodal above half its peak") {
  auto p = fb::GaborFilterbankParams::mel_initialized(8, 257, 16000, 0, 8000);
  ComplexTensor k = fb::gabor_kernels(p);
  for (int64_t n = 0; n < 8; ++n) {
    auto resp = fb::frequency_response_complex(fb::kernel_row(k.real, n),
                                               fb::kernel_row(k.imag, n), 4096,
                                               16000);
    const auto& m = resp.magnitudes;
    double half = m[static_cast<size_t>(argmax(m))] / 2.0;
    int runs = 0;
    bool inside = false;
    for (double v : m) {
      if (v > half && !inside) {
        ++runs;
        inside = true;
      } else if (v <= half) {
        inside = false;
      }
    }
    CHECK(runs == 1);
  }
}

TEST_CASE("leakage metrics sentinels and the gabor vs rectangular-sinc claim") {
  // ideal one-bin response
  std::vector<double> ideal(129, 0.0);
  ideal[40] = 1.0;
  fb::FrequencyResponse resp;
  resp.bin_hz = 16000.0 / 256.0;
  resp.magnitudes = ideal;
  auto m = fb::leakage_metrics(resp, 40 * resp.bin_hz - 1, 40 * resp.bin_hz + 1);
  CHECK(m.sidelobe_db <= -300.0);

  // constant response has zero ripple
  fb::FrequencyResponse flat;
  flat.bin_hz = resp.bin_hz;
  flat.magnitudes.assign(129, 0.7);
  CHECK(fb::leakage_metrics(flat, 100, 3000).ripple_db ==
        doctest::Approx(0.0));

  CHECK_THROWS_AS(fb::leakage_metrics(flat, 3000, 100), ConfigError);

  // Matched mel-initialized pair: gabor leaks less than rectangular sinc.
  // Sidelobe level = peak response outside the filter's own main lobe
  // (-40 dB contour). The comparison is made for filters whose main lobes
  // close inside (0, Nyquist); the top mel filters genuinely spill past
  // Nyquist and have no well-defined sidelobe level.
  const int64_t kW = 1024, kN = 20;
  auto gp = fb::GaborFilterbankParams::mel_initialized(kN, kW, 16000, 0, 8000);
  auto sp = fb::SincFilterbankParams::mel_initialized(kN, kW, 16000, 0, 8000);
  sp.window = fb::rectangular_window(kW);
  ComplexTensor gk = fb::gabor_kernels(gp);
  Tensor sk = fb::sinc_kernels(sp);
  int64_t compared = 0;
  for (int64_t n = 0; n < kN; ++n) {
    auto gr = fb::frequency_response_complex(fb::kernel_row(gk.real, n),
                                             fb::kernel_row(gk.imag, n), 8192,
                                             16000);
    auto sr = fb::frequency_response(fb::kernel_row(sk, n), 8192, 16000);
    double glo, ghi, slo, shi;
    bool g_ok = main_lobe_bounds(gr, &glo, &ghi);
    bool s_ok = main_lobe_bounds(sr, &slo, &shi);
    if (!g_ok || !s_ok) continue;
    ++compared;
    auto gm = fb::leakage_metrics(gr, glo, ghi);
    auto sm = fb::leakage_metrics(sr, slo, shi);
    CHECK(gm.sidelobe_db < sm.sidelobe_db);
  }
  // Mid/high mel filters have sigma_f ~ bandwidth, wide enough to spill
  // past Nyquist; six pairs close fully and all must favor the Gabor bank.
  CHECK(compared >= 5);
}

TEST_CASE("kernel generation is differentiable end to end") {
  auto gp = fb::GaborFilterbankParams::mel_initialized(3, 33, 16000, 0, 8000);
  auto energy_gabor = [&](const Tensor& eta, const Tensor& sigma) {
    fb::GaborFilterbankParams p = gp;
    p.eta = eta;
    p.sigma = sigma;
    ComplexTensor k = fb::gabor_kernels(p);
    return ops::add(ops::sum_all(ops::mul(k.real, k.real)),
                    ops::sum_all(ops::mul(k.imag, k.imag)));
  };
  {
    Tensor eta = gp.eta.clone().set_requires_grad(true);
    Tensor sigma = gp.sigma.clone().set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    GradMap grads = tape.backward(energy_gabor(eta, sigma));
    // Kernel energy is eta-independent (unit-modulus carrier): both the
    // analytic and the numeric gradient must vanish.
    Tensor fd_eta = ops::finite_difference_grad(
        [&](const Tensor& t) {
          NoGradScope ng;
          return energy_gabor(t, sigma).item();
        },
        eta);
    CHECK(tu::max_abs(grads.get(eta).values()) < 1e-8);
    CHECK(tu::max_abs(fd_eta.values()) < 1e-6);
    Tensor fd_sigma = ops::finite_difference_grad(
        [&](const Tensor& t) {
          NoGradScope ng;
          return energy_gabor(eta, t).item();
        },
        sigma);
    CHECK(tu::max_rel_error(grads.get(sigma), fd_sigma) < 1e-4);
  }

  // A functional with nonzero eta sensitivity: random-weighted kernel sum.
  {
    Rng wrng(31);
    Tensor wre = Tensor::uniform(wrng, {3, 33}, -1, 1);
    Tensor wim = Tensor::uniform(wrng, {3, 33}, -1, 1);
    auto weighted = [&](const Tensor& eta, const Tensor& sigma) {
      fb::GaborFilterbankParams p = gp;
      p.eta = eta;
      p.sigma = sigma;
      ComplexTensor k = fb::gabor_kernels(p);
      return ops::add(ops::sum_all(ops::mul(k.real, wre)),
                      ops::sum_all(ops::mul(k.imag, wim)));
    };
    Tensor eta = gp.eta.clone().set_requires_grad(true);
    Tensor sigma = gp.sigma.clone().set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    GradMap grads = tape.backward(weighted(eta, sigma));
    Tensor fd_eta = ops::finite_difference_grad(
        [&](const Tensor& t) {
          NoGradScope ng;
          return weighted(t, sigma).item();
        },
        eta);
    Tensor fd_sigma = ops::finite_difference_grad(
        [&](const Tensor& t) {
          NoGradScope ng;
          return weighted(eta, t).item();
        },
        sigma);
    CHECK(tu::max_rel_error(grads.get(eta), fd_eta) < 1e-4);
    CHECK(tu::max_rel_error(grads.get(sigma), fd_sigma) < 1e-4);
  }

  auto sincp = fb::SincFilterbankParams::mel_initialized(3, 33, 16000, 0, 8000);
  auto energy_sinc = [&](const Tensor& f1, const Tensor& f2) {
    fb::SincFilterbankParams p = sincp;
    p.f1 = f1;
    p.f2 = f2;
    Tensor k = fb::sinc_kernels(p);
    return ops::sum_all(ops::mul(k, k));
  };
  {
    Tensor f1 = sincp.f1.clone().set_requires_grad(true);
    Tensor f2 = sincp.f2.clone().set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    GradMap grads = tape.backward(energy_sinc(f1, f2));
    // cutoffs are in Hz; probe with an Hz-scale step
    Tensor fd_f1 = ops::finite_difference_grad(
        [&](const Tensor& t) {
          NoGradScope ng;
          return energy_sinc(t, f2).item();
        },
        f1, 1e-2);
    Tensor fd_f2 = ops::finite_difference_grad(
        [&](const Tensor& t) {
          NoGradScope ng;
          return energy_sinc(f1, t).item();
        },
        f2, 1e-2);
    CHECK(tu::max_rel_error(grads.get(f1), fd_f1) < 1e-4);
    CHECK(tu::max_rel_error(grads.get(f2), fd_f2) < 1e-4);
  }
}
