// Protocol parsing, waveform ingestion at the fixed 4-second length, and
// the synthetic desk-scale corpus generator.
#pragma once

#include <string>
#include <vector>

#include "gabornet/tensor.hpp"

namespace gabornet {
namespace dataset {

struct TrialEntry {
  std::string speaker;
  std::string utt_id;
  std::string audio_path;
  bool bonafide = false;
  std::string attack = "-";
};

struct TrialManifest {
  std::vector<TrialEntry> entries;
};

// Protocol lines: "speaker utt_id - attack key" with key bonafide|spoof and
// attack "-" for bonafide. Audio paths resolve to audio_dir/utt_id.wav.
TrialManifest parse_protocol(const std::string& path,
                             const std::string& audio_dir);

// PCM16 mono WAV scaled to [-1,1]; shorter clips are tiled (repeated) to
// target_len, longer ones keep the first target_len samples.
Tensor load_waveform(const std::string& path, int64_t target_len = 64600,
                     int sample_rate = 16000);

std::vector<double> fit_length(const std::vector<double>& samples,
                               int64_t target_len);

struct ToyCorpusSpec {
  uint64_t seed = 7;
  int64_t train_per_class = 300;  // per label: bonafide, T01, T02, T03
  int64_t eval_per_class = 100;
  int64_t num_samples = 64600;
  int sample_rate = 16000;
};

struct ToyCorpus {
  std::string train_protocol;
  std::string train_audio_dir;
  std::string eval_protocol;
  std::string eval_audio_dir;
};

// Harmonic "bonafide" complexes with pitch jitter and pink noise, plus
// three synthetic attacks: T01 phase-randomized, T02 spectral-envelope
// flattened, T03 8-level amplitude-quantized. Deterministic per seed.
ToyCorpus make_toy_corpus(const std::string& out_dir, const ToyCorpusSpec& spec);

// One toy waveform without touching the filesystem (used by the tests).
std::vector<double> toy_waveform(uint64_t seed, uint64_t subset,
                                 uint64_t index, const std::string& label,
                                 int64_t num_samples, int sample_rate);

}  // namespace dataset
}  // namespace gabornet
