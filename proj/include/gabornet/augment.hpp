// Training-time waveform augmentation: the six-way RIR/additive-noise
// policy, G.711 companding round trips, a simulated lossy codec, and an
// allowlisted external-encoder hook.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gabornet/common.hpp"

namespace gabornet {
namespace augment {

class AugmentError : public DataError {
 public:
  explicit AugmentError(const std::string& msg) : DataError(msg) {}
};

struct AugmentSources {
  std::vector<std::string> rir_list;
  std::vector<std::string> speech_list;
  std::vector<std::string> music_list;
  std::vector<std::string> noise_list;
};

enum class CodecId { kAlaw, kUlaw, kSimLossy, kExternal };

struct CodecSpec {
  CodecId id = CodecId::kUlaw;
  // sim_lossy strength
  double cutoff_hz = 3500;
  int bits = 6;
  // external: command with {in} and {out} placeholders, argv[0] must be on
  // the allowlist
  std::string command;
  double sample_rate = 16000;
};

// Exact ITU G.711 companding on the integer segment representation.
uint8_t ulaw_encode_s14(int32_t linval);   // linval in [-8192, 8191]
int32_t ulaw_decode_s14(uint8_t code);
uint8_t alaw_encode_s13(int32_t linval);   // linval in [-4096, 4095]
int32_t alaw_decode_s13(uint8_t code);

// Full convolution truncated to the input length, peak-normalized back to
// the input's peak.
std::vector<double> convolve_rir(const std::vector<double>& signal,
                                 const std::vector<double>& rir);

// Noise tiled/cropped to the signal length and scaled so the measured SNR
// equals snr_db; +infinity is the identity sentinel.
std::vector<double> add_noise(const std::vector<double>& signal,
                              const std::vector<double>& noise, double snr_db);

std::vector<double> codec_chain(const std::vector<double>& signal,
                                const CodecSpec& spec);

enum class Policy { kNone, kCodec, kRir, kRirCodec };

struct PolicyOptions {
  Policy policy = Policy::kNone;
  double codec_prob = 0.5;  // independent coin, applied after the branch
  double snr_noise_lo = 0, snr_noise_hi = 15;
  double snr_music_lo = 5, snr_music_hi = 15;
  double snr_speech_lo = 13, snr_speech_hi = 20;
  std::vector<CodecSpec> codecs;
};

using AudioLoader = std::function<std::vector<double>(const std::string&)>;

// One augmentation draw: uniform among the six branches (identity, RIR,
// additive speech/music/noise, speech+music mixture), then the optional
// codec coin. Deterministic given the rng state.
std::vector<double> augment_policy(const std::vector<double>& signal, Rng& rng,
                                   const AugmentSources& sources,
                                   const PolicyOptions& opts,
                                   const AudioLoader& load,
                                   int64_t* branch_taken = nullptr);

Policy parse_policy(const std::string& name);  // none|codec|rir|rir+codec
const char* policy_name(Policy policy);

}  // namespace augment
}  // namespace gabornet
