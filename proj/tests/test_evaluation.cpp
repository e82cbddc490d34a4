#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "lungpipe/error.hpp"
#include "lungpipe/evaluation.hpp"

using namespace lungpipe;

TEST(Metrics, PerfectPredictions) {
  const auto r = weighted_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, {"1", "4", "5"});
  EXPECT_EQ(r.weighted_precision, 1.0);
  EXPECT_EQ(r.weighted_recall, 1.0);
  EXPECT_EQ(r.weighted_f1, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Metrics, BinaryCounts) {
  const auto r = metrics_from_confusion(ConfusionMatrix::binary(86, 54, 58, 100));
  EXPECT_NEAR(r.positive().precision, 0.61, 0.005);
  EXPECT_NEAR(r.positive().recall, 0.60, 0.005);
  EXPECT_NEAR(r.positive().f1, 0.61, 0.005);
  EXPECT_EQ(r.positive().support, 144);
}

TEST(Metrics, ThreeClassHandComputed) {
  // Confusion rows (5,1,0), (2,7,1), (0,0,4).
  std::vector<int> t, p;
  const int rows[3][3] = {{5, 1, 0}, {2, 7, 1}, {0, 0, 4}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int n = 0; n < rows[i][j]; ++n) t.push_back(i), p.push_back(j);
  const auto r = weighted_metrics(t, p, {"1", "4", "5"});
  // Class 0: P 5/7, R 5/6, F1 10/13. Class 1: P 7/8, R 7/10, F1 7/9. Class 2: P 4/5, R 1, F1 8/9.
  EXPECT_NEAR(r.per_class[0].precision, 5.0 / 7, 1e-12);
  EXPECT_NEAR(r.per_class[0].recall, 5.0 / 6, 1e-12);
  EXPECT_NEAR(r.per_class[0].f1, 10.0 / 13, 1e-12);
  EXPECT_NEAR(r.per_class[1].precision, 7.0 / 8, 1e-12);
  EXPECT_NEAR(r.per_class[1].recall, 0.7, 1e-12);
  EXPECT_NEAR(r.per_class[1].f1, 7.0 / 9, 1e-12);
  EXPECT_NEAR(r.per_class[2].precision, 0.8, 1e-12);
  EXPECT_NEAR(r.per_class[2].recall, 1.0, 1e-12);
  EXPECT_NEAR(r.per_class[2].f1, 8.0 / 9, 1e-12);
  EXPECT_NEAR(r.weighted_precision, (6 * 5.0 / 7 + 10 * 7.0 / 8 + 4 * 0.8) / 20, 1e-12);
  EXPECT_NEAR(r.weighted_recall, 0.8, 1e-12);
  EXPECT_NEAR(r.weighted_f1, (6 * 10.0 / 13 + 10 * 7.0 / 9 + 4 * 8.0 / 9) / 20, 1e-12);
  EXPECT_NEAR(r.macro_f1, (10.0 / 13 + 7.0 / 9 + 8.0 / 9) / 3, 1e-12);
  EXPECT_NEAR(r.accuracy, 0.8, 1e-12);
  EXPECT_EQ(r.support, 20);
}

TEST(Metrics, RandomLabelsMatchBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> c(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> t(40), p(40);
    for (auto& v : t) v = c(rng);
    for (auto& v : p) v = c(rng);
    const auto r = weighted_metrics(t, p, {"a", "b", "c"});
    double wp = 0, wr = 0, wf = 0;
    for (int k = 0; k < 3; ++k) {
      double tp = 0, pred = 0, sup = 0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        tp += t[i] == k && p[i] == k;
        pred += p[i] == k;
        sup += t[i] == k;
      }
      const double pr = pred ? tp / pred : 0, rc = sup ? tp / sup : 0, f = pr + rc ? 2 * pr * rc / (pr + rc) : 0;
      wp += pr * sup / 40;
      wr += rc * sup / 40;
      wf += f * sup / 40;
    }
    EXPECT_NEAR(r.weighted_precision, wp, 1e-12);
    EXPECT_NEAR(r.weighted_recall, wr, 1e-12);
    EXPECT_NEAR(r.weighted_f1, wf, 1e-12);
  }
}

TEST(Metrics, ZeroDenominatorsFlagged) {
  const auto r = weighted_metrics({0, 0, 1}, {0, 0, 0}, {"neg", "pos"});
  EXPECT_EQ(r.per_class[1].precision, 0.0);
  EXPECT_FALSE(r.flags.empty());
}

TEST(Metrics, Errors) {
  EXPECT_THROW(weighted_metrics({}, {}, {"a", "b"}), EmptyEvaluation);
  EXPECT_THROW(weighted_metrics({0, 1}, {0}, {"a", "b"}), ValidationError);
  EXPECT_THROW(weighted_metrics({0, 3}, {0, 1}, {"a", "b"}), ValidationError);
}

TEST(RuleBased, Rule) {
  using M = MalignancyClass;
  const auto r = rule_based_patient_eval({{"a", {M::C1, M::C1, M::C4}}, {"b", {M::C1and2, M::C1and2}}},
                                         {{"a", 1}, {"b", 0}, {"c", 1}});
  EXPECT_EQ(r.predicted.at("a"), 1);
  EXPECT_EQ(r.predicted.at("b"), 0);
  EXPECT_EQ(r.predicted.at("c"), 0);
  EXPECT_EQ(r.tp, 1);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.tn, 1);
  EXPECT_THROW(rule_based_patient_eval({{"x", {M::C5}}}, {{"a", 1}}), ValidationError);
}

TEST(RuleBased, ConstructedCohort) {
  using M = MalignancyClass;
  std::map<std::string, std::vector<M>> pred;
  std::map<std::string, int> truth;
  for (int i = 0; i < 65; ++i) {
    const std::string id = "c" + std::to_string(i);
    truth[id] = 1;
    if (i < 61) pred[id] = {M::C1, i % 2 ? M::C4 : M::C5};
    else pred[id] = {M::C1};
  }
  for (int i = 0; i < 8; ++i) {
    const std::string id = "n" + std::to_string(i);
    truth[id] = 0;
    pred[id] = {M::C4};
  }
  const auto r = rule_based_patient_eval(pred, truth);
  EXPECT_EQ(r.tp, 61);
  EXPECT_EQ(r.fp, 8);
  EXPECT_EQ(r.fn, 4);
  EXPECT_NEAR(r.report.positive().precision, 0.89, 0.01);
  EXPECT_NEAR(r.report.positive().recall, 0.94, 0.01);
  EXPECT_NEAR(r.report.positive().f1, 0.92, 0.01);
}

TEST(Froc, ExactHitsAndEmpty) {
  const std::vector<GroundTruthNodule> truth = {{"s1", {0, 0, 0}, 10}, {"s2", {5, 5, 5}, 6}};
  const auto curve = froc({{"s1", {1, 0, 0}, 1.0}, {"s2", {5, 5, 6}, 1.0}}, truth, 2);
  EXPECT_EQ(curve.back().sensitivity, 1.0);
  EXPECT_EQ(curve.back().fp_per_scan, 0.0);
  for (const auto& p : froc({}, truth, 2)) EXPECT_EQ(p.sensitivity, 0.0);
  EXPECT_THROW(froc({}, truth, 0), EmptyEvaluation);
}

TEST(Froc, MatchesThresholdSweep) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> pos(0, 100), jit(-4, 4), sc(0, 1);
  std::vector<GroundTruthNodule> truth;
  std::vector<ScoredCandidate> cands;
  for (int s = 0; s < 10; ++s) {
    const std::string id = "scan" + std::to_string(s);
    for (int n = 0; n < 3; ++n) {
      truth.push_back({id, {pos(rng), pos(rng), pos(rng)}, 8});
      if ((s + n) % 4 != 0) cands.push_back({id, truth.back().center_world + Vec3{jit(rng), 0, 0}, std::round(sc(rng) * 10) / 10});
    }
    for (int f = 0; f < 4; ++f) cands.push_back({id, {pos(rng), pos(rng), pos(rng)}, std::round(sc(rng) * 10) / 10});
  }
  const auto curve = froc(cands, truth, 10);
  std::set<double, std::greater<>> thresholds;
  for (const auto& c : cands) thresholds.insert(c.score);
  ASSERT_EQ(curve.size(), thresholds.size() + 1);
  std::size_t k = 1;
  for (double t : thresholds) {
    std::size_t fps = 0;
    std::set<std::size_t> found;
    for (const auto& c : cands) {
      if (c.score < t) continue;
      bool hit = false;
      for (std::size_t g = 0; g < truth.size(); ++g)
        if (truth[g].scan_id == c.scan_id && (truth[g].center_world - c.center_world).norm() < truth[g].diameter_mm / 2)
          hit = true, found.insert(g);
      fps += !hit;
    }
    EXPECT_DOUBLE_EQ(curve[k].threshold, t);
    EXPECT_DOUBLE_EQ(curve[k].fp_per_scan, double(fps) / 10);
    EXPECT_DOUBLE_EQ(curve[k].sensitivity, double(found.size()) / double(truth.size()));
    ++k;
  }
  const double score = froc_score(curve);
  EXPECT_GE(score, 0.0);
  EXPECT_LE(score, 1.0);
}

TEST(Pr, RankingIdentities) {
  const auto good = pr_curve({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9});
  bool has_corner = false;
  for (const auto& p : good.points) has_corner = has_corner || (p.precision == 1.0 && p.recall == 1.0);
  EXPECT_TRUE(has_corner);
  EXPECT_DOUBLE_EQ(good.average_precision, 1.0);
  const auto bad = pr_curve({0, 0, 0, 1, 1}, {0.9, 0.8, 0.7, 0.2, 0.1});
  EXPECT_DOUBLE_EQ(bad.points.front().recall, 1.0);
  EXPECT_DOUBLE_EQ(bad.points.front().precision, 0.4);
  EXPECT_FALSE(pr_curve({1, 1}, {0.2, 0.3}).warnings.empty());
  EXPECT_THROW(pr_curve({1, 0}, {0.2}), ValidationError);
  EXPECT_THROW(pr_curve({1, 0}, {0.2, NAN}), ValidationError);
}

TEST(Pr, MatchesPerThresholdRecount) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> lab(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<int> y(200);
  std::vector<double> s(200);
  for (int i = 0; i < 200; ++i) {
    y[i] = lab(rng);
    s[i] = std::round((u(rng) + 0.3 * y[i]) * 50) / 50;
  }
  const auto c = pr_curve(y, s);
  std::set<double> thresholds(s.begin(), s.end());
  ASSERT_EQ(c.points.size(), thresholds.size());
  std::size_t k = 0;
  double P = 0;
  for (int v : y) P += v;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (int i = 0; i < 200; ++i)
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    EXPECT_DOUBLE_EQ(c.points[k].threshold, t);
    EXPECT_DOUBLE_EQ(c.points[k].precision, tp / (tp + fp));
    EXPECT_DOUBLE_EQ(c.points[k].recall, tp / P);
    ++k;
  }
}
