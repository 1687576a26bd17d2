// gabornet command line: train, eval, inspect-filters, make-toy-corpus,
// augment-preview. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 numeric fault.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gabornet/audio_io.hpp"
#include "gabornet/checkpoint.hpp"
#include "gabornet/frontend.hpp"
#include "gabornet/trainer.hpp"

namespace fs = std::filesystem;
using namespace gabornet;

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* copt = cmd->add_option("--config", args.config_path,
                               "run configuration (JSON)");
  if (needs_config) copt->required();
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--workers", args.workers,
                  "worker threads (0 = all cores, 1 = bitwise-reproducible "
                  "reference mode; any value yields identical artifacts)");
  cmd->add_option("--out", args.out_dir, "output directory");
}

config::RunConfig load_config(const CommonArgs& args) {
  config::RunConfig cfg = config::load_run_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  return num_threads();
}

void cmd_train(const CommonArgs& args) {
  config::RunConfig cfg = load_config(args);
  int workers = resolve_workers(args.workers);
  set_num_threads(workers);
  trainer::TrainResult result =
      trainer::run_training(cfg, args.out_dir, workers);
  std::printf("metrics: %s\n", result.metrics_csv.c_str());
  std::printf("best checkpoint: %s (val EER %.4f)\n",
              result.best_checkpoint.c_str(), result.best_val_eer);
}

void cmd_eval(const CommonArgs& args, const std::string& ckpt,
              const std::string& protocol, const std::string& audio_dir,
              const std::string& tag) {
  config::RunConfig cfg = load_config(args);
  int workers = resolve_workers(args.workers);
  set_num_threads(workers);
  std::string proto = protocol.empty() ? cfg.data.val_protocol : protocol;
  std::string adir = audio_dir.empty() ? cfg.data.val_audio_dir : audio_dir;
  if (proto.empty())
    throw ConfigError("eval: no protocol given and the config names none");
  dataset::TrialManifest manifest = dataset::parse_protocol(proto, adir);
  trainer::EvalResult result =
      trainer::run_eval(cfg, ckpt, manifest, args.out_dir, workers, tag);
  std::printf("scores: %s\n", result.score_file.c_str());
  std::printf("report: %s\n", result.report_csv.c_str());
  std::printf("pooled EER: %.4f\n", result.pooled_eer);
}

void cmd_inspect_filters(const CommonArgs& args, const std::string& ckpt,
                         int64_t n_fft, const std::string& features_wav) {
  config::RunConfig cfg = load_config(args);
  set_num_threads(resolve_workers(args.workers));
  Rng rng(cfg.seed);
  // the frontend of the configured model carries the filterbank
  frontend::FrontendConfig fcfg = cfg.model == "rawgat"
                                      ? cfg.rawgat.frontend
                                      : cfg.rawnet2.frontend;
  std::unique_ptr<SpoofModel> model = config::build_model(cfg, rng);
  nn::ParamRegistry registry;
  model->register_params(registry);
  if (!ckpt.empty()) checkpoint::load_into(ckpt, registry);
  frontend::Frontend& fe =
      cfg.model == "rawgat"
          ? static_cast<rawgat::RawGat*>(model.get())->frontend_layer()
          : static_cast<rawnet2::RawNet2*>(model.get())->frontend_layer();

  fs::create_directories(args.out_dir);
  const int64_t n = fcfg.num_filters;
  const int64_t w = fcfg.kernel_len;
  std::ofstream kf(fs::path(args.out_dir) / "kernels.csv");
  kf << "filter,tap,real,imag\n";
  std::ofstream rf(fs::path(args.out_dir) / "response.csv");
  rf << "filter,bin,freq_hz,magnitude\n";
  NoGradScope no_grad;
  char line[160];
  auto emit = [&](int64_t filter, const std::vector<double>& re,
                  const std::vector<double>& im) {
    for (int64_t t = 0; t < w; ++t) {
      std::snprintf(line, sizeof(line), "%lld,%lld,%.12g,%.12g\n",
                    static_cast<long long>(filter), static_cast<long long>(t),
                    re[static_cast<size_t>(t)], im[static_cast<size_t>(t)]);
      kf << line;
    }
    auto resp =
        fb::frequency_response_complex(re, im, n_fft, fcfg.sample_rate);
    for (size_t b = 0; b < resp.magnitudes.size(); ++b) {
      std::snprintf(line, sizeof(line), "%lld,%zu,%.6g,%.12g\n",
                    static_cast<long long>(filter), b,
                    resp.bin_hz * static_cast<double>(b), resp.magnitudes[b]);
      rf << line;
    }
  };
  if (fcfg.kind == frontend::FrontendKind::kSinc) {
    Tensor k = fb::sinc_kernels(fe.sinc());
    for (int64_t f = 0; f < n; ++f)
      emit(f, fb::kernel_row(k, f), std::vector<double>(static_cast<size_t>(w), 0.0));
  } else {
    ComplexTensor k = fb::gabor_kernels(fe.gabor());
    for (int64_t f = 0; f < n; ++f)
      emit(f, fb::kernel_row(k.real, f), fb::kernel_row(k.imag, f));
  }
  std::printf("kernels: %s\n",
              (fs::path(args.out_dir) / "kernels.csv").string().c_str());
  std::printf("response: %s\n",
              (fs::path(args.out_dir) / "response.csv").string().c_str());

  if (!features_wav.empty()) {
    Tensor wave = dataset::load_waveform(features_wav, model->input_samples(),
                                         cfg.data.sample_rate);
    // pipeline output before BN+SELU: the post-PCEN map
    Tensor map = fe.features_pre_bn(wave);
    std::ofstream ff(fs::path(args.out_dir) / "features.csv");
    ff << "channel,frame,value\n";
    for (int64_t c = 0; c < map.dim(0); ++c)
      for (int64_t t = 0; t < map.dim(1); ++t) {
        std::snprintf(line, sizeof(line), "%lld,%lld,%.12g\n",
                      static_cast<long long>(c), static_cast<long long>(t),
                      map.at(c, t));
        ff << line;
      }
    std::printf("features: %s\n",
                (fs::path(args.out_dir) / "features.csv").string().c_str());
  }
}

void cmd_make_toy_corpus(const CommonArgs& args, int64_t train_per_class,
                         int64_t eval_per_class) {
  dataset::ToyCorpusSpec spec;
  spec.seed = args.seed_set ? args.seed : 7;
  spec.train_per_class = train_per_class;
  spec.eval_per_class = eval_per_class;
  dataset::ToyCorpus corpus = dataset::make_toy_corpus(args.out_dir, spec);
  std::printf("train protocol: %s\n", corpus.train_protocol.c_str());
  std::printf("eval protocol: %s\n", corpus.eval_protocol.c_str());
}

void cmd_augment_preview(const CommonArgs& args, const std::string& wav,
                         uint64_t epoch, uint64_t utt_index) {
  config::RunConfig cfg = load_config(args);
  augment::AugmentSources sources =
      config::load_augment_sources(cfg.augment);
  std::vector<double> signal =
      audio::read_wav_mono16(wav, cfg.data.sample_rate);
  Rng rng = Rng::keyed(args.seed_set ? args.seed : cfg.seed, epoch + 1,
                       utt_index);
  augment::AudioLoader loader = [&](const std::string& path) {
    return audio::read_wav_mono16(path, cfg.data.sample_rate);
  };
  int64_t branch = -1;
  std::vector<double> out = augment::augment_policy(
      signal, rng, sources, cfg.augment.options, loader, &branch);
  fs::create_directories(args.out_dir);
  std::string out_wav =
      (fs::path(args.out_dir) / "augmented.wav").string();
  audio::write_wav_mono16(out_wav, out, cfg.data.sample_rate);
  std::printf("policy: %s, branch: %lld\n",
              augment::policy_name(cfg.augment.options.policy),
              static_cast<long long>(branch));
  std::printf("augmented: %s\n", out_wav.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable Gabor/sinc audio frontends with the Gabor-RawNet2 "
               "and Gabor-RawGAT-ST spoof-detection backbones"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, inspect_args, toy_args, preview_args;

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, train_args, true);

  CLI::App* eval = app.add_subcommand("eval", "score a manifest");
  add_common(eval, eval_args, true);
  std::string eval_ckpt, eval_protocol, eval_audio_dir, eval_tag = "eval";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to load")
      ->required();
  eval->add_option("--protocol", eval_protocol,
                   "protocol file (default: the config's validation set)");
  eval->add_option("--audio-dir", eval_audio_dir, "audio directory");
  eval->add_option("--tag", eval_tag, "output file prefix");

  CLI::App* inspect =
      app.add_subcommand("inspect-filters", "dump kernels and responses");
  add_common(inspect, inspect_args, true);
  std::string inspect_ckpt, inspect_features;
  int64_t inspect_nfft = 4096;
  inspect->add_option("--checkpoint", inspect_ckpt,
                      "checkpoint to load (default: initialization)");
  inspect->add_option("--n-fft", inspect_nfft, "FFT size (power of two)");
  inspect->add_option("--dump-features", inspect_features,
                      "also run this WAV through the frontend and dump the "
                      "post-PCEN map as CSV");

  CLI::App* toy = app.add_subcommand("make-toy-corpus",
                                     "generate the synthetic corpus");
  add_common(toy, toy_args, false);
  int64_t train_per_class = 300, eval_per_class = 100;
  toy->add_option("--train-per-class", train_per_class,
                  "training clips per label");
  toy->add_option("--eval-per-class", eval_per_class,
                  "evaluation clips per label");

  CLI::App* preview =
      app.add_subcommand("augment-preview", "apply one augmentation draw");
  add_common(preview, preview_args, true);
  std::string preview_wav;
  uint64_t preview_epoch = 0, preview_utt = 0;
  preview->add_option("--wav", preview_wav, "input waveform")->required();
  preview->add_option("--epoch", preview_epoch, "epoch index for the stream");
  preview->add_option("--utt-index", preview_utt,
                      "utterance index for the stream");

  try {
    app.parse(argc, argv);
    if (train->parsed()) cmd_train(train_args);
    if (eval->parsed())
      cmd_eval(eval_args, eval_ckpt, eval_protocol, eval_audio_dir, eval_tag);
    if (inspect->parsed())
      cmd_inspect_filters(inspect_args, inspect_ckpt, inspect_nfft,
                          inspect_features);
    if (toy->parsed())
      cmd_make_toy_corpus(toy_args, train_per_class, eval_per_class);
    if (preview->parsed())
      cmd_augment_preview(preview_args, preview_wav, preview_epoch,
                          preview_utt);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
