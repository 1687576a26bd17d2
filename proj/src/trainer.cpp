#include "gabornet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "gabornet/audio_io.hpp"
#include "gabornet/checkpoint.hpp"
#include "gabornet/optim.hpp"

namespace gabornet {
namespace trainer {

namespace {

// Fans item work out to `workers` threads; each worker runs single-threaded
// kernels so the machine is not oversubscribed.
void for_each_item(int64_t n, int workers,
                   const std::function<void(int64_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int spawn = static_cast<int>(std::min<int64_t>(workers, n));
  std::vector<std::thread> threads;
  std::atomic<int64_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(spawn));
  for (int w = 0; w < spawn; ++w) {
    threads.emplace_back([&, w]() {
      ThreadLimitGuard guard(1);
      try {
        for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct ItemResult {
  double loss = 0;
  GradMap grads;
  std::vector<nn::BnUpdate> bn_updates;
};

double item_scale(int64_t batch_items) {
  return 1.0 / static_cast<double>(batch_items);
}

}  // namespace

std::vector<evalmetrics::TrialScore> score_manifest(
    SpoofModel& model, const dataset::TrialManifest& manifest,
    int sample_rate, int workers) {
  const int64_t n = static_cast<int64_t>(manifest.entries.size());
  std::vector<evalmetrics::TrialScore> scores(static_cast<size_t>(n));
  const int64_t target = model.input_samples();
  for_each_item(n, workers, [&](int64_t i) {
    const auto& entry = manifest.entries[static_cast<size_t>(i)];
    Tensor wave =
        dataset::load_waveform(entry.audio_path, target, sample_rate);
    NoGradScope no_grad;
    nn::ForwardCtx ctx;  // evaluation mode: running BN stats, no dropout
    Tensor logp = model.forward(wave, ctx);
    evalmetrics::TrialScore& s = scores[static_cast<size_t>(i)];
    s.utt_id = entry.utt_id;
    s.bonafide = entry.bonafide;
    s.attack = entry.attack;
    s.score = logp.at(1);  // bonafide log-probability
  });
  return scores;
}

TrainResult run_training(const config::RunConfig& cfg,
                         const std::string& out_dir, int workers) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (workers < 1) workers = 1;

  dataset::TrialManifest train = dataset::parse_protocol(
      cfg.data.train_protocol, cfg.data.train_audio_dir);
  dataset::TrialManifest val =
      dataset::parse_protocol(cfg.data.val_protocol, cfg.data.val_audio_dir);
  if (train.entries.empty()) throw DataError("training manifest is empty");
  if (val.entries.empty()) throw DataError("validation manifest is empty");

  Rng init_rng(cfg.seed);
  std::unique_ptr<SpoofModel> model = config::build_model(cfg, init_rng);
  nn::ParamRegistry registry;
  model->register_params(registry);
  optim::Adam adam(registry, {cfg.train.lr, cfg.train.beta1, cfg.train.beta2,
                              cfg.train.adam_eps});

  const bool augment_on =
      cfg.augment.options.policy != augment::Policy::kNone;
  augment::AugmentSources sources;
  if (augment_on) sources = config::load_augment_sources(cfg.augment);
  augment::AudioLoader loader = [&](const std::string& path) {
    return audio::read_wav_mono16(path, cfg.data.sample_rate);
  };

  TrainResult result;
  result.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
  result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();

  std::ofstream metrics(result.metrics_csv, std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + result.metrics_csv);
  metrics << "epoch,loss,val_eer,lr\n";
  metrics.flush();

  // initial checkpoint; overwritten whenever the validation EER improves
  checkpoint::save(result.best_checkpoint, registry);

  const int64_t n_train = static_cast<int64_t>(train.entries.size());
  const int64_t batches_per_epoch =
      (n_train + cfg.train.batch_size - 1) / cfg.train.batch_size;
  const int64_t total_steps = std::max<int64_t>(
      1, cfg.train.epochs * batches_per_epoch);
  const int64_t target_len = model->input_samples();

  int64_t global_step = 0;
  char row[160];
  for (int64_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::keyed(cfg.seed, 0x5u, static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    int64_t epoch_items = 0;
    double lr = cfg.train.lr;
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      const int64_t begin = b * cfg.train.batch_size;
      const int64_t end = std::min(n_train, begin + cfg.train.batch_size);
      const int64_t batch_items = end - begin;
      std::vector<ItemResult> items(static_cast<size_t>(batch_items));

      for_each_item(batch_items, workers, [&](int64_t k) {
        const int64_t idx = order[static_cast<size_t>(begin + k)];
        const auto& entry = train.entries[static_cast<size_t>(idx)];
        Tensor wave = dataset::load_waveform(entry.audio_path, target_len,
                                             cfg.data.sample_rate);
        Rng item_rng = Rng::keyed(cfg.seed, static_cast<uint64_t>(epoch) + 1,
                                  static_cast<uint64_t>(idx));
        if (augment_on) {
          std::vector<double> augmented = augment::augment_policy(
              wave.values(), item_rng, sources, cfg.augment.options, loader);
          wave = Tensor::from(std::move(augmented), {target_len});
        }
        ItemResult& item = items[static_cast<size_t>(k)];
        Tape tape;
        TapeScope scope(tape);
        nn::ForwardCtx ctx;
        ctx.training = true;
        ctx.rng = &item_rng;
        ctx.bn_updates = &item.bn_updates;
        Tensor logp = model->forward(wave, ctx);
        Tensor loss =
            ops::neg(ops::select_index(logp, 0, entry.bonafide ? 1 : 0));
        item.loss = loss.item();
        item.grads = tape.backward(loss);
      });

      // deterministic reduction in batch order
      GradMap total;
      double batch_loss = 0;
      std::map<nn::BatchNorm*, std::pair<std::vector<double>,
                                         std::vector<double>>> bn_acc;
      std::vector<nn::BatchNorm*> bn_order;
      for (const ItemResult& item : items) {
        total.add_scaled(item.grads, item_scale(batch_items));
        batch_loss += item.loss * item_scale(batch_items);
        for (const nn::BnUpdate& upd : item.bn_updates) {
          auto [it, fresh] = bn_acc.try_emplace(upd.layer);
          if (fresh) {
            it->second.first.assign(upd.mean.size(), 0.0);
            it->second.second.assign(upd.var.size(), 0.0);
            bn_order.push_back(upd.layer);
          }
          for (size_t i = 0; i < upd.mean.size(); ++i) {
            it->second.first[i] += upd.mean[i] * item_scale(batch_items);
            it->second.second[i] += upd.var[i] * item_scale(batch_items);
          }
        }
      }
      if (!std::isfinite(batch_loss))
        throw NumericFault("training loss became non-finite at epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(b));
      for (nn::BatchNorm* layer : bn_order)
        layer->apply_update(bn_acc.at(layer).first, bn_acc.at(layer).second);

      lr = optim::cosine_lr(global_step, total_steps, cfg.train.lr);
      adam.step(total, lr);
      model->clamp_params();
      ++global_step;
      epoch_loss += batch_loss * static_cast<double>(batch_items);
      epoch_items += batch_items;
    }
    epoch_loss /= static_cast<double>(epoch_items);
    if (epoch == 0) result.first_epoch_loss = epoch_loss;
    result.last_epoch_loss = epoch_loss;

    auto val_scores =
        score_manifest(*model, val, cfg.data.sample_rate, workers);
    const double val_eer = evalmetrics::compute_eer(val_scores).eer;
    std::snprintf(row, sizeof(row), "%lld,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(epoch), epoch_loss, val_eer, lr);
    metrics << row;
    metrics.flush();
    if (val_eer < result.best_val_eer) {
      result.best_val_eer = val_eer;
      checkpoint::save(result.best_checkpoint, registry);
    }
  }
  return result;
}

EvalResult run_eval(const config::RunConfig& cfg,
                    const std::string& checkpoint_path,
                    const dataset::TrialManifest& manifest,
                    const std::string& out_dir, int workers,
                    const std::string& tag) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (workers < 1) workers = 1;
  Rng rng(cfg.seed);
  std::unique_ptr<SpoofModel> model = config::build_model(cfg, rng);
  nn::ParamRegistry registry;
  model->register_params(registry);
  checkpoint::load_into(checkpoint_path, registry);

  EvalResult result;
  result.scores =
      score_manifest(*model, manifest, cfg.data.sample_rate, workers);
  result.score_file = (fs::path(out_dir) / (tag + "_scores.txt")).string();
  result.report_csv = (fs::path(out_dir) / (tag + "_eer.csv")).string();
  evalmetrics::write_score_file(result.score_file, result.scores);
  auto table = evalmetrics::per_attack_eer(result.scores);
  evalmetrics::write_eer_report_csv(result.report_csv, table);
  result.pooled_eer = table.back().second;
  return result;
}

}  // namespace trainer
}  // namespace gabornet
