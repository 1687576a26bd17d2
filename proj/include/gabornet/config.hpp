// Run configuration: one JSON document covering the model choice, frontend
// variant, training hyperparameters, augmentation policy, and data paths.
// Defaults reproduce the published configuration (lr 1e-4 with a cosine
// schedule, per-backbone filter counts and kernel lengths).
#pragma once

#include <memory>
#include <string>

#include "gabornet/augment.hpp"
#include "gabornet/model.hpp"
#include "gabornet/rawgat.hpp"
#include "gabornet/rawnet2.hpp"

namespace gabornet {
namespace config {

struct TrainConfig {
  int64_t epochs = 20;
  int64_t batch_size = 16;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct AugmentConfig {
  augment::PolicyOptions options;
  std::string rir_list;
  std::string speech_list;
  std::string music_list;
  std::string noise_list;
};

struct DataConfig {
  std::string train_protocol;
  std::string train_audio_dir;
  std::string val_protocol;
  std::string val_audio_dir;
  int sample_rate = 16000;
};

struct RunConfig {
  std::string model = "rawnet2";  // rawnet2 | rawgat
  uint64_t seed = 1;
  rawnet2::RawNet2Config rawnet2 = rawnet2::RawNet2Config::paper_defaults();
  rawgat::RawGatConfig rawgat = rawgat::RawGatConfig::paper_defaults();
  TrainConfig train;
  AugmentConfig augment;
  DataConfig data;

  int64_t input_samples() const {
    return model == "rawgat" ? rawgat.input_samples : rawnet2.input_samples;
  }
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

std::unique_ptr<SpoofModel> build_model(const RunConfig& cfg, Rng& rng);

// Newline-delimited path list, '#' comments allowed.
std::vector<std::string> read_path_list(const std::string& path);
augment::AugmentSources load_augment_sources(const AugmentConfig& cfg);

}  // namespace config
}  // namespace gabornet
