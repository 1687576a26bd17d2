// Scoring and equal-error-rate evaluation: threshold sweep over the
// empirical score values, DET points, and the per-attack breakdown.
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace gabornet {
namespace evalmetrics {

struct TrialScore {
  std::string utt_id;
  bool bonafide = false;
  std::string attack = "-";  // "-" for bonafide trials
  double score = 0;          // higher = more bonafide
};

struct EerResult {
  double eer = 0;
  double threshold = 0;
};

// Thresholds sweep the sorted unique scores; FAR = spoof scored >= t,
// FRR = bonafide scored < t; the EER is the midpoint at the threshold
// minimizing |FAR - FRR| (lowest such threshold on ties).
EerResult compute_eer(const std::vector<TrialScore>& trials);

struct DetPoint {
  double threshold;
  double far;
  double frr;
};

// One point per unique threshold, ascending. FAR is nonincreasing and FRR
// nondecreasing along the sweep.
std::vector<DetPoint> det_points(const std::vector<TrialScore>& trials);

// EER of (all bonafide) vs (each attack's spoofs), attacks in sorted label
// order, then a final {"all", pooled} row. Attacks without trials simply
// do not appear.
std::vector<std::pair<std::string, double>> per_attack_eer(
    const std::vector<TrialScore>& trials);

// ASVspoof-style score lines: "utt_id attack key score".
void write_score_file(const std::string& path,
                      const std::vector<TrialScore>& trials);
std::vector<TrialScore> read_score_file(const std::string& path);

// CSV with one column per attack plus "all", EER values in percent.
void write_eer_report_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, double>>& table);

}  // namespace evalmetrics
}  // namespace gabornet
