#include "gabornet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gabornet/audio_io.hpp"
#include "gabornet/common.hpp"

namespace gabornet {
namespace dataset {

TrialManifest parse_protocol(const std::string& path,
                             const std::string& audio_dir) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open protocol file " + path);
  TrialManifest manifest;
  std::set<std::string> seen;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    TrialEntry e;
    std::string dash, key;
    if (!(ss >> e.speaker >> e.utt_id >> dash >> e.attack >> key))
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'speaker utt_id - attack key'");
    if (key == "bonafide") {
      e.bonafide = true;
      if (e.attack != "-")
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": bonafide trial carries attack label '" + e.attack +
                        "'");
    } else if (key == "spoof") {
      e.bonafide = false;
      if (e.attack == "-")
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": spoof trial carries no attack label");
    } else {
      throw DataError(path + ":" + std::to_string(lineno) + ": key '" + key +
                      "' must be bonafide or spoof");
    }
    if (!seen.insert(e.utt_id).second)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": duplicate utt_id " + e.utt_id);
    e.audio_path = (std::filesystem::path(audio_dir) / (e.utt_id + ".wav"))
                       .string();
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::vector<double> fit_length(const std::vector<double>& samples,
                               int64_t target_len) {
  if (samples.empty()) throw DataError("fit_length: empty waveform");
  std::vector<double> out(static_cast<size_t>(target_len));
  for (int64_t i = 0; i < target_len; ++i)
    out[static_cast<size_t>(i)] =
        samples[static_cast<size_t>(i) % samples.size()];
  return out;
}

Tensor load_waveform(const std::string& path, int64_t target_len,
                     int sample_rate) {
  std::vector<double> samples = audio::read_wav_mono16(path, sample_rate);
  if (samples.empty()) throw DataError(path + ": no samples");
  return Tensor::from(fit_length(samples, target_len), {target_len});
}

// ---------------------------------------------------------------------------
// Toy corpus
// ---------------------------------------------------------------------------

namespace {
int64_t label_id(const std::string& label) {
  if (label == "bonafide") return 0;
  if (label == "T01") return 1;
  if (label == "T02") return 2;
  if (label == "T03") return 3;
  throw ContractError("toy corpus: unknown label " + label);
}

// Pink-ish noise: octave-held uniform sources summed.
std::vector<double> pink_noise(Rng& rng, int64_t n) {
  constexpr int kRows = 12;
  std::array<double, kRows> rows{};
  for (auto& r : rows) r = rng.uniform(-1, 1);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < kRows; ++k)
      if (i % (1 << k) == 0) rows[static_cast<size_t>(k)] = rng.uniform(-1, 1);
    double acc = 0;
    for (double r : rows) acc += r;
    out[static_cast<size_t>(i)] = acc / kRows;
  }
  return out;
}
}  // namespace

std::vector<double> toy_waveform(uint64_t seed, uint64_t subset,
                                 uint64_t index, const std::string& label,
                                 int64_t num_samples, int sample_rate) {
  const int64_t lid = label_id(label);
  Rng rng = Rng::keyed(seed, subset * 16 + static_cast<uint64_t>(lid), index);

  const double f0 = rng.uniform(100.0, 250.0);
  const int64_t nharm =
      std::min<int64_t>(12, static_cast<int64_t>(7600.0 / f0));
  const double vib_rate = rng.uniform(3.0, 7.0);
  const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> amps(static_cast<size_t>(nharm));
  for (int64_t h = 0; h < nharm; ++h)
    amps[static_cast<size_t>(h)] =
        lid == 2 ? 1.0 : 1.0 / static_cast<double>(h + 1);
  std::vector<double> phases(static_cast<size_t>(nharm));
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * M_PI);

  // phase-randomization blocks for T01
  constexpr int64_t kBlock = 400;
  constexpr int64_t kFade = 64;
  std::vector<double> next_phases = phases;

  std::vector<double> x(static_cast<size_t>(num_samples), 0.0);
  double theta = 0.0;
  for (int64_t i = 0; i < num_samples; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double inst_f0 =
        f0 * (1.0 + 0.01 * std::sin(2.0 * M_PI * vib_rate * t + vib_phase));
    theta += 2.0 * M_PI * inst_f0 / sample_rate;
    if (lid == 1 && i % kBlock == 0 && i > 0) {
      phases = next_phases;
      for (auto& p : next_phases) p = rng.uniform(0.0, 2.0 * M_PI);
    }
    double v = 0;
    if (lid != 1) {
      for (int64_t h = 0; h < nharm; ++h)
        v += amps[static_cast<size_t>(h)] *
             std::sin(static_cast<double>(h + 1) * theta +
                      phases[static_cast<size_t>(h)]);
    } else {
      // crossfade from the previous block's phases into the new draw
      const int64_t in_block = i % kBlock;
      const bool fading = i >= kBlock && in_block < kFade;
      const double w = fading ? static_cast<double>(in_block) / kFade : 1.0;
      for (int64_t h = 0; h < nharm; ++h) {
        const double arg = static_cast<double>(h + 1) * theta;
        double s = std::sin(arg + next_phases[static_cast<size_t>(h)]);
        if (fading)
          s = (1.0 - w) * std::sin(arg + phases[static_cast<size_t>(h)]) +
              w * s;
        v += amps[static_cast<size_t>(h)] * s;
      }
    }
    x[static_cast<size_t>(i)] = v;
  }

  // normalize the harmonic part, add pink noise ~25 dB below it
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  for (double& v : x) v *= 0.9 / peak;
  double rms = 0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(num_samples));
  std::vector<double> noise = pink_noise(rng, num_samples);
  double nrms = 0;
  for (double v : noise) nrms += v * v;
  nrms = std::sqrt(nrms / static_cast<double>(num_samples));
  const double noise_gain = rms * std::pow(10.0, -25.0 / 20.0) / nrms;
  for (int64_t i = 0; i < num_samples; ++i)
    x[static_cast<size_t>(i)] += noise_gain * noise[static_cast<size_t>(i)];

  if (lid == 3) {
    // 8-level amplitude quantization over [-1, 1)
    for (double& v : x) {
      double cell = std::floor(std::min(0.999, std::max(-1.0, v)) * 4.0);
      v = (cell + 0.5) / 4.0;
    }
  }

  // identical gain law for every label keeps loudness uninformative
  const double gain = rng.uniform(0.25, 0.7);
  for (double& v : x) v *= gain;
  return x;
}

ToyCorpus make_toy_corpus(const std::string& out_dir,
                          const ToyCorpusSpec& spec) {
  namespace fs = std::filesystem;
  const std::array<const char*, 4> labels = {"bonafide", "T01", "T02", "T03"};
  ToyCorpus corpus;
  for (int subset = 0; subset < 2; ++subset) {
    const std::string name = subset == 0 ? "train" : "eval";
    const int64_t per_class =
        subset == 0 ? spec.train_per_class : spec.eval_per_class;
    fs::path dir = fs::path(out_dir) / name;
    fs::path audio = dir / "audio";
    std::error_code ec;
    fs::create_directories(audio, ec);
    if (ec)
      throw DataError("cannot create corpus directory " + audio.string() +
                      ": " + ec.message());
    fs::path protocol = dir / "protocol.txt";
    std::ofstream proto(protocol, std::ios::trunc);
    if (!proto) throw DataError("cannot write " + protocol.string());
    for (size_t lab = 0; lab < labels.size(); ++lab) {
      for (int64_t i = 0; i < per_class; ++i) {
        char utt[64];
        std::snprintf(utt, sizeof(utt), "T_%s_%s_%04lld",
                      subset == 0 ? "TRN" : "EVL", labels[lab],
                      static_cast<long long>(i));
        std::vector<double> wave =
            toy_waveform(spec.seed, static_cast<uint64_t>(subset),
                         static_cast<uint64_t>(i), labels[lab],
                         spec.num_samples, spec.sample_rate);
        audio::write_wav_mono16((audio / (std::string(utt) + ".wav")).string(),
                                wave, spec.sample_rate);
        const bool bona = lab == 0;
        proto << "TOY_SPK " << utt << " - " << (bona ? "-" : labels[lab])
              << " " << (bona ? "bonafide" : "spoof") << "\n";
      }
    }
    if (subset == 0) {
      corpus.train_protocol = protocol.string();
      corpus.train_audio_dir = audio.string();
    } else {
      corpus.eval_protocol = protocol.string();
      corpus.eval_audio_dir = audio.string();
    }
  }
  return corpus;
}

}  // namespace dataset
}  // namespace gabornet
