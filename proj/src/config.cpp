#include "gabornet/config.hpp"

#include <fstream>

#include <json.hpp>

namespace gabornet {
namespace config {

namespace {
using nlohmann::json;

ops::Pad parse_pad(const json& j, const char* key, ops::Pad fallback) {
  if (!j.contains(key)) return fallback;
  std::string v = j.at(key).get<std::string>();
  if (v == "same") return ops::Pad::kSame;
  if (v == "valid") return ops::Pad::kValid;
  throw ConfigError(std::string("config: pad mode '") + v +
                    "' must be same or valid");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_frontend(const json& j, frontend::FrontendConfig& cfg) {
  if (j.contains("type")) {
    std::string t = j.at("type").get<std::string>();
    if (t == "gabor") {
      cfg.kind = frontend::FrontendKind::kGabor;
    } else if (t == "leaf" || t == "gabor+pcen") {
      cfg.kind = frontend::FrontendKind::kLeaf;
    } else if (t == "sinc") {
      cfg.kind = frontend::FrontendKind::kSinc;
    } else {
      throw ConfigError("config: frontend type '" + t +
                        "' must be gabor, leaf (gabor+pcen) or sinc");
    }
  }
  maybe(j, "num_filters", cfg.num_filters);
  maybe(j, "kernel_len", cfg.kernel_len);
  maybe(j, "sample_rate", cfg.sample_rate);
  maybe(j, "mel_fmin", cfg.mel_fmin);
  maybe(j, "mel_fmax", cfg.mel_fmax);
  if (j.contains("pool")) {
    const json& p = j.at("pool");
    maybe(p, "kernel_len", cfg.pool_kernel_len);
    maybe(p, "stride", cfg.pool_stride);
    cfg.pool_pad = parse_pad(p, "pad", cfg.pool_pad);
  }
  if (j.contains("max_pool")) {
    const json& p = j.at("max_pool");
    if (p.contains("axis")) {
      std::string a = p.at("axis").get<std::string>();
      if (a == "time") {
        cfg.max_pool_axis = frontend::PoolAxis::kTime;
      } else if (a == "filters") {
        cfg.max_pool_axis = frontend::PoolAxis::kFilters;
      } else {
        throw ConfigError("config: max_pool axis must be time or filters");
      }
    }
    maybe(p, "kernel", cfg.max_pool_kernel);
    maybe(p, "stride", cfg.max_pool_stride);
    cfg.max_pool_pad = parse_pad(p, "pad", cfg.max_pool_pad);
  }
  if (j.contains("pcen")) {
    const json& p = j.at("pcen");
    maybe(p, "alpha", cfg.pcen_alpha);
    maybe(p, "delta", cfg.pcen_delta);
    maybe(p, "r", cfg.pcen_r);
    maybe(p, "s", cfg.pcen_s);
    maybe(p, "eps", cfg.pcen_eps);
  }
}

augment::CodecSpec parse_codec(const json& j) {
  augment::CodecSpec spec;
  std::string id = j.at("id").get<std::string>();
  if (id == "alaw") {
    spec.id = augment::CodecId::kAlaw;
  } else if (id == "ulaw") {
    spec.id = augment::CodecId::kUlaw;
  } else if (id == "sim_lossy") {
    spec.id = augment::CodecId::kSimLossy;
  } else if (id == "external") {
    spec.id = augment::CodecId::kExternal;
  } else {
    throw ConfigError("config: codec id '" + id +
                      "' must be alaw, ulaw, sim_lossy or external");
  }
  maybe(j, "cutoff_hz", spec.cutoff_hz);
  maybe(j, "bits", spec.bits);
  maybe(j, "command", spec.command);
  maybe(j, "sample_rate", spec.sample_rate);
  return spec;
}
}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  maybe(j, "model", cfg.model);
  if (cfg.model != "rawnet2" && cfg.model != "rawgat")
    throw ConfigError("config: model '" + cfg.model +
                      "' must be rawnet2 or rawgat");
  maybe(j, "seed", cfg.seed);

  if (j.contains("frontend")) {
    parse_frontend(j.at("frontend"), cfg.rawnet2.frontend);
    parse_frontend(j.at("frontend"), cfg.rawgat.frontend);
  }
  if (j.contains("rawnet2")) {
    const json& r = j.at("rawnet2");
    maybe(r, "input_samples", cfg.rawnet2.input_samples);
    maybe(r, "stack1_channels", cfg.rawnet2.stack1_channels);
    maybe(r, "stack2_channels", cfg.rawnet2.stack2_channels);
    maybe(r, "blocks_per_stack", cfg.rawnet2.blocks_per_stack);
    maybe(r, "gru_hidden", cfg.rawnet2.gru_hidden);
    maybe(r, "fc_hidden", cfg.rawnet2.fc_hidden);
    maybe(r, "leaky_slope", cfg.rawnet2.leaky_slope);
  }
  if (j.contains("rawgat")) {
    const json& r = j.at("rawgat");
    maybe(r, "input_samples", cfg.rawgat.input_samples);
    maybe(r, "stack1_channels", cfg.rawgat.stack1_channels);
    maybe(r, "stack2_channels", cfg.rawgat.stack2_channels);
    maybe(r, "gat_dim", cfg.rawgat.gat_dim);
    maybe(r, "proj_nodes", cfg.rawgat.proj_nodes);
    maybe(r, "fusion_gat_dim", cfg.rawgat.fusion_gat_dim);
    maybe(r, "k_spectral", cfg.rawgat.k_spectral);
    maybe(r, "k_temporal", cfg.rawgat.k_temporal);
    maybe(r, "k_fusion", cfg.rawgat.k_fusion);
    maybe(r, "dropout", cfg.rawgat.dropout);
    maybe(r, "use_spectral", cfg.rawgat.use_spectral);
    maybe(r, "use_temporal", cfg.rawgat.use_temporal);
    maybe(r, "use_fusion", cfg.rawgat.use_fusion);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "adam_eps", cfg.train.adam_eps);
    if (cfg.train.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (cfg.train.batch_size < 1)
      throw ConfigError("config: batch_size must be >= 1");
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    if (a.contains("policy"))
      cfg.augment.options.policy =
          augment::parse_policy(a.at("policy").get<std::string>());
    maybe(a, "codec_prob", cfg.augment.options.codec_prob);
    maybe(a, "snr_noise_lo", cfg.augment.options.snr_noise_lo);
    maybe(a, "snr_noise_hi", cfg.augment.options.snr_noise_hi);
    maybe(a, "snr_music_lo", cfg.augment.options.snr_music_lo);
    maybe(a, "snr_music_hi", cfg.augment.options.snr_music_hi);
    maybe(a, "snr_speech_lo", cfg.augment.options.snr_speech_lo);
    maybe(a, "snr_speech_hi", cfg.augment.options.snr_speech_hi);
    maybe(a, "rir_list", cfg.augment.rir_list);
    maybe(a, "speech_list", cfg.augment.speech_list);
    maybe(a, "music_list", cfg.augment.music_list);
    maybe(a, "noise_list", cfg.augment.noise_list);
    if (a.contains("codecs"))
      for (const json& c : a.at("codecs"))
        cfg.augment.options.codecs.push_back(parse_codec(c));
  }
  // default codec set for codec-bearing policies: the exact companders plus
  // the simulated lossy stand-in
  if (cfg.augment.options.codecs.empty()) {
    augment::CodecSpec alaw;
    alaw.id = augment::CodecId::kAlaw;
    augment::CodecSpec ulaw;
    ulaw.id = augment::CodecId::kUlaw;
    augment::CodecSpec sim;
    sim.id = augment::CodecId::kSimLossy;
    cfg.augment.options.codecs = {alaw, ulaw, sim};
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    maybe(d, "train_protocol", cfg.data.train_protocol);
    maybe(d, "train_audio_dir", cfg.data.train_audio_dir);
    maybe(d, "val_protocol", cfg.data.val_protocol);
    maybe(d, "val_audio_dir", cfg.data.val_audio_dir);
    maybe(d, "sample_rate", cfg.data.sample_rate);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::unique_ptr<SpoofModel> build_model(const RunConfig& cfg, Rng& rng) {
  if (cfg.model == "rawgat")
    return std::make_unique<rawgat::RawGat>(cfg.rawgat, rng);
  return std::make_unique<rawnet2::RawNet2>(cfg.rawnet2, rng);
}

std::vector<std::string> read_path_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open path list " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

augment::AugmentSources load_augment_sources(const AugmentConfig& cfg) {
  augment::AugmentSources s;
  if (!cfg.rir_list.empty()) s.rir_list = read_path_list(cfg.rir_list);
  if (!cfg.speech_list.empty()) s.speech_list = read_path_list(cfg.speech_list);
  if (!cfg.music_list.empty()) s.music_list = read_path_list(cfg.music_list);
  if (!cfg.noise_list.empty()) s.noise_list = read_path_list(cfg.noise_list);
  return s;
}

}  // namespace config
}  // namespace gabornet
