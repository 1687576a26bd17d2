#include "gabornet/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gabornet/common.hpp"

namespace gabornet {
namespace evalmetrics {

namespace {
struct SplitScores {
  std::vector<double> bona;   // sorted ascending
  std::vector<double> spoof;  // sorted ascending
};

SplitScores split_and_sort(const std::vector<TrialScore>& trials) {
  SplitScores s;
  for (const auto& t : trials) (t.bonafide ? s.bona : s.spoof).push_back(t.score);
  if (s.bona.empty() || s.spoof.empty())
    throw ConfigError("compute_eer: need at least one bonafide and one spoof "
                      "trial (got " + std::to_string(s.bona.size()) + " / " +
                      std::to_string(s.spoof.size()) + ")");
  std::sort(s.bona.begin(), s.bona.end());
  std::sort(s.spoof.begin(), s.spoof.end());
  return s;
}

std::vector<double> unique_scores(const SplitScores& s) {
  std::vector<double> all;
  all.reserve(s.bona.size() + s.spoof.size());
  all.insert(all.end(), s.bona.begin(), s.bona.end());
  all.insert(all.end(), s.spoof.begin(), s.spoof.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

double far_at(const SplitScores& s, double threshold) {
  auto it = std::lower_bound(s.spoof.begin(), s.spoof.end(), threshold);
  return static_cast<double>(s.spoof.end() - it) /
         static_cast<double>(s.spoof.size());
}

double frr_at(const SplitScores& s, double threshold) {
  auto it = std::lower_bound(s.bona.begin(), s.bona.end(), threshold);
  return static_cast<double>(it - s.bona.begin()) /
         static_cast<double>(s.bona.size());
}
}  // namespace

EerResult compute_eer(const std::vector<TrialScore>& trials) {
  SplitScores s = split_and_sort(trials);
  EerResult best;
  double best_gap = -1;
  for (double threshold : unique_scores(s)) {
    const double far = far_at(s, threshold);
    const double frr = frr_at(s, threshold);
    const double gap = std::fabs(far - frr);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best.threshold = threshold;
      best.eer = (far + frr) / 2.0;
    }
  }
  return best;
}

std::vector<DetPoint> det_points(const std::vector<TrialScore>& trials) {
  SplitScores s = split_and_sort(trials);
  std::vector<DetPoint> points;
  for (double threshold : unique_scores(s))
    points.push_back({threshold, far_at(s, threshold), frr_at(s, threshold)});
  return points;
}

std::vector<std::pair<std::string, double>> per_attack_eer(
    const std::vector<TrialScore>& trials) {
  std::vector<TrialScore> bona;
  std::map<std::string, std::vector<TrialScore>> attacks;
  for (const auto& t : trials) {
    if (t.bonafide) {
      bona.push_back(t);
    } else {
      if (t.attack == "-" || t.attack.empty())
        throw ConfigError("per_attack_eer: spoof trial " + t.utt_id +
                          " carries no attack label");
      attacks[t.attack].push_back(t);
    }
  }
  std::vector<std::pair<std::string, double>> table;
  for (const auto& [label, rows] : attacks) {
    std::vector<TrialScore> subset = bona;
    subset.insert(subset.end(), rows.begin(), rows.end());
    table.emplace_back(label, compute_eer(subset).eer);
  }
  table.emplace_back("all", compute_eer(trials).eer);
  return table;
}

void write_score_file(const std::string& path,
                      const std::vector<TrialScore>& trials) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write score file " + path);
  char line[256];
  for (const auto& t : trials) {
    std::snprintf(line, sizeof(line), "%s %s %s %.17g\n", t.utt_id.c_str(),
                  t.attack.c_str(), t.bonafide ? "bonafide" : "spoof",
                  t.score);
    out << line;
  }
}

std::vector<TrialScore> read_score_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path);
  std::vector<TrialScore> trials;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    TrialScore t;
    std::string key;
    if (!(ss >> t.utt_id >> t.attack >> key >> t.score))
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": malformed score line");
    if (key != "bonafide" && key != "spoof")
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": key must be bonafide or spoof, got '" + key + "'");
    t.bonafide = key == "bonafide";
    trials.push_back(std::move(t));
  }
  return trials;
}

void write_eer_report_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, double>>& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report " + path);
  for (size_t i = 0; i < table.size(); ++i)
    out << (i ? "," : "") << table[i].first;
  out << "\n";
  char cell[64];
  for (size_t i = 0; i < table.size(); ++i) {
    std::snprintf(cell, sizeof(cell), "%.3f", table[i].second * 100.0);
    out << (i ? "," : "") << cell;
  }
  out << "\n";
}

}  // namespace evalmetrics
}  // namespace gabornet
