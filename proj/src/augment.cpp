#include "gabornet/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "gabornet/audio_io.hpp"

namespace gabornet {
namespace augment {

// ---------------------------------------------------------------------------
// G.711 companding, ITU segment algorithms
// ---------------------------------------------------------------------------

uint8_t ulaw_encode_s14(int32_t linval) {
  linval = std::min<int32_t>(8191, std::max<int32_t>(-8192, linval));
  // 33 is the offset between the A-law and u-law thresholds.
  int32_t absno = (linval < 0 ? ~linval : linval) + 33;
  if (absno > 0x1fff) absno = 0x1fff;
  int32_t i = absno >> 6;
  int32_t segno = 1;
  while (i != 0) {
    ++segno;
    i >>= 1;
  }
  int32_t high_nibble = 0x8 - segno;
  int32_t low_nibble = (absno >> segno) & 0xf;
  low_nibble = 0xf - low_nibble;
  int32_t code = (high_nibble << 4) | low_nibble;
  if (linval >= 0) code |= 0x80;
  return static_cast<uint8_t>(code);
}

int32_t ulaw_decode_s14(uint8_t code) {
  int32_t sign = code < 0x80 ? -1 : 1;
  int32_t mantissa = ~code;
  int32_t exponent = (mantissa >> 4) & 0x7;
  int32_t segment = exponent + 1;
  mantissa &= 0xf;
  int32_t step = 4 << segment;
  int32_t linval =
      sign * ((0x80 << exponent) + step * mantissa + step / 2 - 4 * 33);
  return linval >> 2;
}

uint8_t alaw_encode_s13(int32_t linval) {
  linval = std::min<int32_t>(4095, std::max<int32_t>(-4096, linval));
  int32_t ix = linval < 0 ? (~linval) >> 1 : linval >> 1;
  if (ix > 15) {
    int32_t iexp = 1;
    while (ix > 16 + 15) {
      ix >>= 1;
      ++iexp;
    }
    ix -= 16;
    ix |= iexp << 4;
  }
  if (linval >= 0) ix |= 0x80;
  return static_cast<uint8_t>(ix ^ 0x55);  // even bits toggled
}

int32_t alaw_decode_s13(uint8_t code) {
  int32_t ix = code ^ 0x55;
  ix &= 0x7f;
  int32_t iexp = ix >> 4;
  int32_t mant = ix & 0xf;
  if (iexp > 0) mant += 16;
  mant = (mant << 1) + 1;  // half quantization step
  if (iexp > 1) mant <<= iexp - 1;
  return code > 127 ? mant : -mant;
}

// ---------------------------------------------------------------------------
// Waveform operations
// ---------------------------------------------------------------------------

namespace {
double peak(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double mean_power(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x * x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

std::vector<double> tile_to(const std::vector<double>& v, size_t len) {
  std::vector<double> out(len);
  for (size_t i = 0; i < len; ++i) out[i] = v[i % v.size()];
  return out;
}
}  // namespace

std::vector<double> convolve_rir(const std::vector<double>& signal,
                                 const std::vector<double>& rir) {
  if (signal.empty()) throw ConfigError("convolve_rir: empty signal");
  if (rir.empty() || peak(rir) == 0.0)
    throw ConfigError("convolve_rir: silent impulse response");
  const size_t n = signal.size();
  std::vector<double> out(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    double acc = 0;
    const size_t kmax = std::min(rir.size() - 1, t);
    for (size_t k = 0; k <= kmax; ++k) acc += rir[k] * signal[t - k];
    out[t] = acc;
  }
  const double in_peak = peak(signal);
  const double out_peak = peak(out);
  if (out_peak > 0.0) {
    const double gain = in_peak / out_peak;
    for (double& v : out) v *= gain;
  }
  return out;
}

std::vector<double> add_noise(const std::vector<double>& signal,
                              const std::vector<double>& noise,
                              double snr_db) {
  if (std::isinf(snr_db)) return signal;
  if (signal.empty() || mean_power(signal) == 0.0)
    throw ConfigError("add_noise: signal is silent");
  if (noise.empty()) throw ConfigError("add_noise: empty noise");
  std::vector<double> tiled = tile_to(noise, signal.size());
  const double p_noise = mean_power(tiled);
  if (p_noise == 0.0) throw ConfigError("add_noise: all-zero noise");
  const double p_signal = mean_power(signal);
  const double gain =
      std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> out(signal.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = signal[i] + gain * tiled[i];
  return out;
}

namespace {
std::vector<double> lowpass_quantize(const std::vector<double>& x,
                                     double cutoff_hz, int bits,
                                     double sample_rate) {
  if (bits < 1 || bits > 16)
    throw ConfigError("sim_lossy: bits must be in [1, 16]");
  if (!(cutoff_hz > 0 && cutoff_hz < sample_rate / 2))
    throw ConfigError("sim_lossy: cutoff must sit inside (0, Nyquist)");
  // 101-tap Hamming-windowed sinc, same-padded so the length is preserved.
  constexpr int kTaps = 101;
  const double fc = cutoff_hz / sample_rate;
  std::array<double, kTaps> h{};
  double sum = 0;
  for (int i = 0; i < kTaps; ++i) {
    const int t = i - kTaps / 2;
    double v = t == 0 ? 2.0 * fc : std::sin(2.0 * M_PI * fc * t) / (M_PI * t);
    v *= 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (kTaps - 1));
    h[static_cast<size_t>(i)] = v;
    sum += v;
  }
  for (double& v : h) v /= sum;  // unity DC gain
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<double> smooth(x.size(), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0;
    for (int t = 0; t < kTaps; ++t) {
      int64_t j = i + t - kTaps / 2;
      if (j < 0 || j >= n) continue;
      acc += h[static_cast<size_t>(t)] * x[static_cast<size_t>(j)];
    }
    smooth[static_cast<size_t>(i)] = acc;
  }
  const double levels = static_cast<double>(1 << (bits - 1));
  for (double& v : smooth) {
    double q = std::round(std::min(1.0, std::max(-1.0, v)) * levels) / levels;
    v = q;
  }
  return smooth;
}

const std::array<const char*, 4> kExternalAllowlist = {"ffmpeg", "sox",
                                                       "opusenc", "lame"};

std::vector<double> external_codec(const std::vector<double>& x,
                                   const CodecSpec& spec) {
  // validate the command head against the allowlist
  std::string head = spec.command.substr(0, spec.command.find(' '));
  std::string base = std::filesystem::path(head).filename().string();
  bool allowed = false;
  for (const char* name : kExternalAllowlist) allowed |= base == name;
  if (!allowed)
    throw ConfigError("external codec: '" + base +
                      "' is not on the encoder allowlist");
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() /
                 ("gabornet-codec-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  fs::path in_wav = dir / "in.wav";
  fs::path out_wav = dir / "out.wav";
  fs::path log = dir / "log.txt";
  audio::write_wav_mono16(in_wav.string(), x,
                          static_cast<int>(spec.sample_rate));
  std::string cmd = spec.command;
  auto replace_all = [&cmd](const std::string& from, const std::string& to) {
    for (size_t p = cmd.find(from); p != std::string::npos;
         p = cmd.find(from, p + to.size()))
      cmd.replace(p, from.size(), to);
  };
  replace_all("{in}", in_wav.string());
  replace_all("{out}", out_wav.string());
  cmd += " >" + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc != 0 || !fs::exists(out_wav)) {
    std::ifstream lf(log);
    std::string diag((std::istreambuf_iterator<char>(lf)),
                     std::istreambuf_iterator<char>());
    fs::remove_all(dir);
    if (diag.size() > 500) diag.resize(500);
    throw AugmentError("external codec failed (exit " + std::to_string(rc) +
                       "): " + diag);
  }
  std::vector<double> decoded = audio::read_wav_mono16(
      out_wav.string(), static_cast<int>(spec.sample_rate));
  fs::remove_all(dir);
  if (decoded.empty()) throw AugmentError("external codec produced no audio");
  return tile_to(decoded, x.size());
}
}  // namespace

std::vector<double> codec_chain(const std::vector<double>& signal,
                                const CodecSpec& spec) {
  switch (spec.id) {
    case CodecId::kAlaw: {
      std::vector<double> out(signal.size());
      for (size_t i = 0; i < out.size(); ++i) {
        int32_t s13 = static_cast<int32_t>(std::lround(signal[i] * 4096.0));
        out[i] = static_cast<double>(alaw_decode_s13(alaw_encode_s13(s13))) /
                 4096.0;
      }
      return out;
    }
    case CodecId::kUlaw: {
      std::vector<double> out(signal.size());
      for (size_t i = 0; i < out.size(); ++i) {
        int32_t s14 = static_cast<int32_t>(std::lround(signal[i] * 8192.0));
        out[i] = static_cast<double>(ulaw_decode_s14(ulaw_encode_s14(s14))) /
                 8192.0;
      }
      return out;
    }
    case CodecId::kSimLossy:
      return lowpass_quantize(signal, spec.cutoff_hz, spec.bits,
                              spec.sample_rate);
    case CodecId::kExternal:
      return external_codec(signal, spec);
  }
  throw ContractError("codec_chain: unknown codec id");
}

namespace {
const std::vector<std::string>& branch_sources(const AugmentSources& s,
                                               int64_t branch) {
  switch (branch) {
    case 1: return s.rir_list;
    case 2: return s.speech_list;
    case 3: return s.music_list;
    case 4: return s.noise_list;
    default: return s.speech_list;
  }
}

std::vector<double> pick(const std::vector<std::string>& list, Rng& rng,
                         const AudioLoader& load, const char* what) {
  if (list.empty())
    throw ConfigError(std::string("augment: the ") + what +
                      " source list is empty for the selected branch");
  return load(list[static_cast<size_t>(
      rng.uniform_int(0, static_cast<int64_t>(list.size()) - 1))]);
}
}  // namespace

std::vector<double> augment_policy(const std::vector<double>& signal, Rng& rng,
                                   const AugmentSources& sources,
                                   const PolicyOptions& opts,
                                   const AudioLoader& load,
                                   int64_t* branch_taken) {
  std::vector<double> out = signal;
  const bool rir_branches =
      opts.policy == Policy::kRir || opts.policy == Policy::kRirCodec;
  const bool codec_coin =
      opts.policy == Policy::kCodec || opts.policy == Policy::kRirCodec;
  if (branch_taken) *branch_taken = -1;

  if (rir_branches) {
    const int64_t num = rng.uniform_int(0, 5);
    if (branch_taken) *branch_taken = num;
    switch (num) {
      case 0:
        break;  // identity
      case 1:
        out = convolve_rir(out, pick(sources.rir_list, rng, load, "RIR"));
        break;
      case 2:
        out = add_noise(out, pick(sources.speech_list, rng, load, "speech"),
                        rng.uniform(opts.snr_speech_lo, opts.snr_speech_hi));
        break;
      case 3:
        out = add_noise(out, pick(sources.music_list, rng, load, "music"),
                        rng.uniform(opts.snr_music_lo, opts.snr_music_hi));
        break;
      case 4:
        out = add_noise(out, pick(sources.noise_list, rng, load, "noise"),
                        rng.uniform(opts.snr_noise_lo, opts.snr_noise_hi));
        break;
      case 5: {
        // speech + music mixed first, then added as one distortion
        std::vector<double> mix =
            tile_to(pick(sources.speech_list, rng, load, "speech"),
                    out.size());
        std::vector<double> music =
            tile_to(pick(sources.music_list, rng, load, "music"), out.size());
        for (size_t i = 0; i < mix.size(); ++i) mix[i] += music[i];
        out = add_noise(out, mix,
                        rng.uniform(opts.snr_speech_lo, opts.snr_speech_hi));
        break;
      }
      default:
        break;
    }
  }
  if (codec_coin && !opts.codecs.empty() && rng.uniform() < opts.codec_prob) {
    const auto& spec = opts.codecs[static_cast<size_t>(rng.uniform_int(
        0, static_cast<int64_t>(opts.codecs.size()) - 1))];
    out = codec_chain(out, spec);
  }
  return out;
}

Policy parse_policy(const std::string& name) {
  if (name == "none") return Policy::kNone;
  if (name == "codec") return Policy::kCodec;
  if (name == "rir") return Policy::kRir;
  if (name == "rir+codec") return Policy::kRirCodec;
  throw ConfigError("unknown augmentation policy '" + name +
                    "' (expected none|codec|rir|rir+codec)");
}

const char* policy_name(Policy policy) {
  switch (policy) {
    case Policy::kNone: return "none";
    case Policy::kCodec: return "codec";
    case Policy::kRir: return "rir";
    case Policy::kRirCodec: return "rir+codec";
  }
  return "?";
}

}  // namespace augment
}  // namespace gabornet
