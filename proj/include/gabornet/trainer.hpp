// Training loop (Adam + cosine schedule, batch-parallel workers with
// deterministic gradient reduction) and batch evaluation.
#pragma once

#include "gabornet/config.hpp"
#include "gabornet/dataset.hpp"
#include "gabornet/evalmetrics.hpp"

namespace gabornet {
namespace trainer {

struct TrainResult {
  std::string metrics_csv;      // epoch,loss,val_eer,lr
  std::string best_checkpoint;  // lowest validation EER
  double best_val_eer = 1.0;
  double first_epoch_loss = 0;
  double last_epoch_loss = 0;
};

// Deterministic given (config, seed, corpus): per-utterance augmentation
// streams are keyed on (seed, epoch, manifest index) and gradients reduce
// in manifest order, so any worker count reproduces the same bytes.
TrainResult run_training(const config::RunConfig& cfg,
                         const std::string& out_dir, int workers);

struct EvalResult {
  std::string score_file;
  std::string report_csv;
  double pooled_eer = 0;
  std::vector<evalmetrics::TrialScore> scores;
};

EvalResult run_eval(const config::RunConfig& cfg,
                    const std::string& checkpoint_path,
                    const dataset::TrialManifest& manifest,
                    const std::string& out_dir, int workers,
                    const std::string& tag);

// Scores every manifest entry with the model in evaluation mode; the score
// is the bonafide log-probability.
std::vector<evalmetrics::TrialScore> score_manifest(
    SpoofModel& model, const dataset::TrialManifest& manifest,
    int sample_rate, int workers);

}  // namespace trainer
}  // namespace gabornet
