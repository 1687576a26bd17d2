#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gabornet/evalmetrics.hpp"
#include "gabornet/common.hpp"
#include "testing_util.hpp"

using namespace gabornet;
namespace ev = gabornet::evalmetrics;

namespace {
ev::TrialScore trial(bool bona, double score, const std::string& attack = "") {
  ev::TrialScore t;
  t.utt_id = "utt";
  t.bonafide = bona;
  t.attack = bona ? "-" : (attack.empty() ? "A01" : attack);
  t.score = score;
  return t;
}

// O(n^2) oracle: recount FAR/FRR from scratch at every candidate threshold.
ev::EerResult brute_force_eer(const std::vector<ev::TrialScore>& trials) {
  std::vector<double> candidates;
  for (const auto& t : trials) candidates.push_back(t.score);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  int64_t nb = 0, ns = 0;
  for (const auto& t : trials) (t.bonafide ? nb : ns)++;
  ev::EerResult best;
  double best_gap = -1;
  for (double th : candidates) {
    int64_t fa = 0, fr = 0;
    for (const auto& t : trials) {
      if (!t.bonafide && t.score >= th) ++fa;
      if (t.bonafide && t.score < th) ++fr;
    }
    double far = static_cast<double>(fa) / static_cast<double>(ns);
    double frr = static_cast<double>(fr) / static_cast<double>(nb);
    double gap = std::fabs(far - frr);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best.threshold = th;
      best.eer = (far + frr) / 2.0;
    }
  }
  return best;
}
}  // namespace

TEST_CASE("eer landmarks") {
  // perfectly separated
  std::vector<ev::TrialScore> sep = {trial(true, 0.9), trial(true, 0.8),
                                     trial(false, 0.1), trial(false, 0.2)};
  CHECK(ev::compute_eer(sep).eer == 0.0);

  // all trials share one score: FAR=1/FRR=0 bracket, midpoint 0.5
  std::vector<ev::TrialScore> flat = {trial(true, 0.5), trial(true, 0.5),
                                      trial(false, 0.5)};
  CHECK(ev::compute_eer(flat).eer == 0.5);

  // worked example: bonafide {0.9, 0.8, 0.2}, spoof {0.7, 0.3, 0.1}
  std::vector<ev::TrialScore> mixed = {trial(true, 0.9),  trial(true, 0.8),
                                       trial(true, 0.2),  trial(false, 0.7),
                                       trial(false, 0.3), trial(false, 0.1)};
  CHECK(ev::compute_eer(mixed).eer == doctest::Approx(1.0 / 3.0));

  // one-class input is an argument error
  std::vector<ev::TrialScore> one = {trial(true, 0.4)};
  CHECK_THROWS_AS(ev::compute_eer(one), ConfigError);
}

TEST_CASE("compute_eer equals the quadratic brute force on random sets") {
  Rng rng(101);
  for (int inst = 0; inst < 120; ++inst) {
    int64_t nb = rng.uniform_int(1, 100);
    int64_t ns = rng.uniform_int(1, 100);
    std::vector<ev::TrialScore> trials;
    for (int64_t i = 0; i < nb; ++i)
      trials.push_back(trial(true, rng.uniform(-1, 1) +
                                       0.3 * rng.uniform_int(0, 2)));
    for (int64_t i = 0; i < ns; ++i)
      trials.push_back(trial(false, rng.uniform(-1, 1)));
    ev::EerResult fast = ev::compute_eer(trials);
    ev::EerResult slow = brute_force_eer(trials);
    CHECK(fast.eer == slow.eer);
    CHECK(fast.threshold == slow.threshold);
    CHECK(fast.eer >= 0.0);
    CHECK(fast.eer <= 1.0);
  }
}

TEST_CASE("eer is invariant to strictly increasing score transforms") {
  Rng rng(102);
  std::vector<ev::TrialScore> trials;
  for (int i = 0; i < 60; ++i) trials.push_back(trial(true, rng.uniform(-2, 2)));
  for (int i = 0; i < 40; ++i) trials.push_back(trial(false, rng.uniform(-2, 2)));
  double base = ev::compute_eer(trials).eer;
  auto transformed = trials;
  for (auto& t : transformed) t.score = std::tanh(t.score) * 3.0 + 1.0;
  CHECK(ev::compute_eer(transformed).eer == base);

  // label swap with score negation mirrors the problem
  auto swapped = trials;
  for (auto& t : swapped) {
    t.bonafide = !t.bonafide;
    t.attack = t.bonafide ? "-" : "A01";
    t.score = -t.score;
  }
  CHECK(ev::compute_eer(swapped).eer == doctest::Approx(base));
}

TEST_CASE("det points are monotone and cross at the eer") {
  Rng rng(103);
  std::vector<ev::TrialScore> trials;
  for (int i = 0; i < 50; ++i)
    trials.push_back(trial(true, rng.uniform(0, 2)));
  for (int i = 0; i < 50; ++i)
    trials.push_back(trial(false, rng.uniform(-1, 1)));

  auto points = ev::det_points(trials);
  for (size_t i = 1; i < points.size(); ++i) {
    CHECK(points[i].threshold > points[i - 1].threshold);
    CHECK(points[i].far <= points[i - 1].far);
    CHECK(points[i].frr >= points[i - 1].frr);
  }
  // crossing point agrees with compute_eer up to one grid step
  double best_gap = 2.0, eer_from_det = 0, step = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    double gap = std::fabs(points[i].far - points[i].frr);
    if (gap < best_gap) {
      best_gap = gap;
      eer_from_det = (points[i].far + points[i].frr) / 2.0;
      step = gap;
    }
  }
  CHECK(std::fabs(eer_from_det - ev::compute_eer(trials).eer) <= step + 1e-12);

  // separated two-trial set reaches the (0, 0) corner region
  std::vector<ev::TrialScore> two = {trial(true, 1.0), trial(false, 0.0)};
  auto p2 = ev::det_points(two);
  bool has_zero_zero = false;
  for (const auto& p : p2) has_zero_zero |= (p.far == 0.0 && p.frr == 0.0);
  CHECK(has_zero_zero);
}

TEST_CASE("per-attack table layout and pooling") {
  Rng rng(104);
  std::vector<ev::TrialScore> trials;
  for (int i = 0; i < 40; ++i) trials.push_back(trial(true, rng.uniform(0.2, 1.0)));
  // A07 fully separable (all below every bonafide), A08 overlapping
  for (int i = 0; i < 30; ++i)
    trials.push_back(trial(false, rng.uniform(-1.0, 0.1), "A07"));
  for (int i = 0; i < 30; ++i)
    trials.push_back(trial(false, rng.uniform(0.0, 1.2), "A08"));

  auto table = ev::per_attack_eer(trials);
  REQUIRE(table.size() == 3);
  CHECK(table[0].first == "A07");
  CHECK(table[1].first == "A08");
  CHECK(table[2].first == "all");
  CHECK(table[0].second == 0.0);
  CHECK(table[2].second >= table[0].second);
  CHECK(table[2].second <= table[1].second);

  // single attack pools to the same value
  std::vector<ev::TrialScore> single;
  for (int i = 0; i < 20; ++i) single.push_back(trial(true, rng.uniform(0, 1)));
  for (int i = 0; i < 20; ++i)
    single.push_back(trial(false, rng.uniform(0, 1), "A03"));
  auto stable = ev::per_attack_eer(single);
  REQUIRE(stable.size() == 2);
  CHECK(stable[0].second == stable[1].second);
}

TEST_CASE("score file and report round trips") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "gabornet-eval-test";
  fs::create_directories(dir);
  std::vector<ev::TrialScore> trials = {
      {"LA_E_0001", true, "-", 1.25},
      {"LA_E_0002", false, "A07", -0.75},
      {"LA_E_0003", false, "A19", 0.0078125},
  };
  std::string path = (dir / "scores.txt").string();
  ev::write_score_file(path, trials);
  auto back = ev::read_score_file(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].utt_id == trials[i].utt_id);
    CHECK(back[i].bonafide == trials[i].bonafide);
    CHECK(back[i].attack == trials[i].attack);
    CHECK(back[i].score == trials[i].score);  // %.17g survives the trip
  }

  std::string report = (dir / "report.csv").string();
  ev::write_eer_report_csv(report,
                           {{"A07", 0.03952}, {"A08", 0.05208}, {"all", 0.04131}});
  std::ifstream in(report);
  std::string header, values;
  std::getline(in, header);
  std::getline(in, values);
  CHECK(header == "A07,A08,all");
  CHECK(values == "3.952,5.208,4.131");
  fs::remove_all(dir);
}
