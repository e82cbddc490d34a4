#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "lungpipe/error.hpp"
#include "lungpipe/phantom.hpp"
#include "lungpipe/pipeline.hpp"

using namespace lungpipe;

namespace {

MalignancyOutput probs(std::vector<double> p) { return {std::move(p), {}, {"1", "4", "5"}}; }

/// Support-weighted binary F1 over both classes, computed from scratch.
double weighted_f1(const std::vector<int>& t, const std::vector<int>& p) {
  double total = 0, acc = 0;
  for (int c : {0, 1}) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      tp += t[i] == c && p[i] == c;
      fp += t[i] != c && p[i] == c;
      fn += t[i] == c && p[i] != c;
    }
    const double pr = tp + fp > 0 ? tp / (tp + fp) : 0, rc = tp + fn > 0 ? tp / (tp + fn) : 0;
    const double f = pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0;
    acc += f * (tp + fn);
    total += tp + fn;
  }
  return acc / total;
}

struct Cohort {
  ml::Matrix X;
  std::vector<int> y;
  std::vector<std::string> groups;
};

/// Patients with 1..3 nodules each; the nodule label is the patient label.
Cohort cohort(int patients, double gap, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0, 1);
  std::uniform_int_distribution<int> count(1, 3);
  Cohort c;
  for (int p = 0; p < patients; ++p) {
    const int label = p % 2;
    for (int i = count(rng); i > 0; --i) {
      c.X.push_back({n01(rng) + label * gap, n01(rng) - label * gap});
      c.y.push_back(label);
      c.groups.push_back("patient" + std::to_string(p));
    }
  }
  return c;
}

}  // namespace

TEST(IntegrationMode, ParseAndPrint) {
  EXPECT_EQ(parse_integration_mode("prob"), IntegrationMode::Probability);
  EXPECT_EQ(parse_integration_mode("probability"), IntegrationMode::Probability);
  EXPECT_EQ(parse_integration_mode("model"), IntegrationMode::Model);
  EXPECT_EQ(to_string(IntegrationMode::Class), "class");
  EXPECT_THROW(parse_integration_mode("hybrid"), ConfigError);
}

TEST(Features, BaselineIdentity) {
  const FeatureVector f = make_features(CandidateFeatures{8, 0.6, 0.4}, nullptr, IntegrationMode::Baseline);
  EXPECT_EQ(f.values, (std::vector<double>{8, 0.6, 0.4}));
  EXPECT_EQ(f.schema, baseline_schema());
}

TEST(Features, ClassCodes) {
  const CandidateFeatures base{5, 0.5, 0.5};
  const auto m = probs({0.1, 0.7, 0.2});
  const FeatureVector f = make_features(base, &m, IntegrationMode::Class);
  ASSERT_EQ(f.values.size(), 4u);
  EXPECT_EQ(f.values[3], 1.0);
  EXPECT_EQ(class_code(probs({0.5, 0.2, 0.3})), 0);
  EXPECT_EQ(class_code(probs({0.1, 0.2, 0.7})), 2);
}

TEST(Features, ClassCodeIsArgmax) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> p = {u(rng), u(rng), u(rng)};
    const double s = p[0] + p[1] + p[2];
    for (auto& x : p) x /= s;
    const int code = class_code(probs(p));
    for (int j = 0; j < 3; ++j) EXPECT_GE(p[std::size_t(code)], p[std::size_t(j)]);
  }
}

TEST(Features, ProbabilityAndModelWidths) {
  const CandidateFeatures base{5, 0.5, 0.5};
  const auto m = probs({0.1, 0.7, 0.2});
  const FeatureVector f = make_features(base, &m, IntegrationMode::Probability);
  EXPECT_EQ(f.values, (std::vector<double>{5, 0.5, 0.5, 0.1, 0.7, 0.2}));
  EXPECT_EQ(f.schema.back(), "p_5");
  MalignancyOutput pen = probs({0.2, 0.3, 0.5});
  pen.penultimate.assign(64, 0.25);
  const FeatureVector g = make_features(base, &pen, IntegrationMode::Model);
  EXPECT_EQ(g.values.size(), 67u);
  EXPECT_EQ(g.schema.size(), 67u);
}

TEST(Features, ModeMismatch) {
  const CandidateFeatures base{5, 0.5, 0.5};
  const auto m = probs({0.1, 0.7, 0.2});
  EXPECT_THROW(make_features(base, &m, IntegrationMode::Baseline), IntegrationError);
  EXPECT_THROW(make_features(base, nullptr, IntegrationMode::Probability), IntegrationError);
  EXPECT_THROW(make_features(base, &m, IntegrationMode::Model), IntegrationError);
  const auto two = probs({0.4, 0.6});
  EXPECT_THROW(make_features(base, &two, IntegrationMode::Class), IntegrationError);
}

TEST(Labels, Propagation) {
  std::vector<NoduleCandidate> three(3);
  for (const auto& l : propagate_labels(1, three)) EXPECT_EQ(l.label, 1);
  EXPECT_EQ(propagate_labels(1, three).size(), 3u);
  EXPECT_TRUE(propagate_labels(0, {}).empty());
}

TEST(Labels, RecountOverCohort) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> n(0, 6), lab(0, 1);
  long long pos = 0, neg = 0, direct_pos = 0, direct_neg = 0;
  for (int p = 0; p < 100; ++p) {
    const int label = lab(rng);
    const std::vector<NoduleCandidate> cands(static_cast<std::size_t>(n(rng)));
    (label ? direct_pos : direct_neg) += static_cast<long long>(cands.size());
    for (const auto& c : propagate_labels(label, cands)) (c.label ? pos : neg) += 1;
  }
  EXPECT_EQ(pos, direct_pos);
  EXPECT_EQ(neg, direct_neg);
}

TEST(Grids, ConfigurationCounts) {
  const auto g = table_s5_grids();
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[0].configurations().size(), 12u);
  EXPECT_EQ(g[1].configurations().size(), 12u);
  EXPECT_EQ(g[2].configurations().size(), 48u);
  EXPECT_EQ(g[3].configurations().size(), 36u + 144u);
  for (const auto& c : g[3].configurations()) EXPECT_EQ(c.contains("degree"), c["kernel"] == "poly");
  std::set<std::string> seen;
  for (const auto& c : g[3].configurations()) EXPECT_TRUE(seen.insert(c.dump()).second);
  const auto first = g[0].configurations();
  EXPECT_EQ(first[0], (nlohmann::json{{"n_neighbors", 1}, {"weights", "uniform"}}));
  EXPECT_EQ(first[1], (nlohmann::json{{"n_neighbors", 1}, {"weights", "distance"}}));
  for (const auto& grid : g)
    for (const auto& c : grid.configurations()) EXPECT_NO_THROW(ml::make_classifier(grid.family, c, 0));
}

TEST(Grids, DenseHeadSizes) {
  EXPECT_EQ(dense_head_sizes(67), (std::vector<int>{16, 22, 33, 67}));
  EXPECT_EQ(dense_head_sizes(6), (std::vector<int>{1, 2, 3, 6}));
  EXPECT_EQ(dense_head_sizes(2), (std::vector<int>{1, 2}));
  const ClassifierGrid g = dense_head_grid(67);
  EXPECT_EQ(g.family, "mlp");
  EXPECT_EQ(g.configurations().size(), 4u * 6u * 2u);
  EXPECT_THROW(dense_head_sizes(0), ConfigError);
}

TEST(Report, MeanStdFormat) {
  EXPECT_EQ(format_mean_std(0.65, 0.02), "0.650+/-0.02");
  EXPECT_EQ(format_mean_std(0.8234, 0.0361), "0.823+/-0.04");
}

TEST(Folds, PatientDisjointAndStratified) {
  const Cohort c = cohort(40, 1.0, 2);
  const auto f = grouped_folds(c.y, c.groups, 5, 3);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto [it, inserted] = fold_of.emplace(c.groups[i], f[i]);
    EXPECT_EQ(it->second, f[i]);
  }
  for (int k = 0; k < 5; ++k)
    for (int cls : {0, 1}) {
      bool found = false;
      for (std::size_t i = 0; i < f.size(); ++i) found = found || (f[i] == k && c.y[i] == cls);
      EXPECT_TRUE(found);
    }
  EXPECT_EQ(grouped_folds(c.y, c.groups, 5, 3), f);
  const Cohort tiny = cohort(3, 1.0, 2);
  EXPECT_THROW(grouped_folds(tiny.y, tiny.groups, 5, 0), FoldError);
}

TEST(GridSearch, SingleConfigurationMatchesManualCv) {
  const Cohort c = cohort(30, 1.0, 5);
  const ClassifierGrid g{"logistic", {{"C", {nlohmann::json(1.0)}}, {"penalty", {nlohmann::json("l2")}}}};
  const CvResult r = grid_search_cv(c.X, c.y, c.groups, {g}, 5, 7);
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_EQ(r.best, 0u);
  const auto folds = grouped_folds(c.y, c.groups, 5, 7);
  EXPECT_EQ(r.fold_of, folds);
  std::vector<double> f1;
  for (int k = 0; k < 5; ++k) {
    ml::Matrix trX, teX;
    std::vector<int> trY, teY;
    for (std::size_t i = 0; i < c.X.size(); ++i) {
      (folds[i] == k ? teX : trX).push_back(c.X[i]);
      (folds[i] == k ? teY : trY).push_back(c.y[i]);
    }
    auto m = ml::make_classifier("logistic", g.configurations()[0], 7 + std::uint64_t(k));
    m->fit(trX, trY);
    f1.push_back(weighted_f1(teY, m->predict(teX)));
  }
  double mean = 0;
  for (double v : f1) mean += v / 5;
  double var = 0;
  for (double v : f1) var += (v - mean) * (v - mean) / 5;
  EXPECT_NEAR(r.best_score().mean_f1, mean, 1e-12);
  EXPECT_NEAR(r.best_score().std_f1, std::sqrt(var), 1e-12);
  EXPECT_EQ(r.best_score().fold_f1.size(), 5u);
  ASSERT_TRUE(r.model);
  EXPECT_EQ(r.oof_probability.size(), c.X.size());
}

TEST(GridSearch, SeparableSetPicksPerfectLogistic) {
  const Cohort c = cohort(40, 8.0, 6);
  std::vector<ClassifierGrid> grids = {compact_grids()[1]};
  const CvResult r = grid_search_cv(c.X, c.y, c.groups, grids, 5, 1);
  EXPECT_DOUBLE_EQ(r.best_score().mean_f1, 1.0);
  EXPECT_EQ(r.best_score().family, "logistic");
  // Ties among perfect configurations (same key count) resolve to the first in grid order.
  std::size_t first_perfect = 0;
  while (r.table[first_perfect].mean_f1 < 1.0) ++first_perfect;
  EXPECT_EQ(r.best, first_perfect);
  const auto again = grid_search_cv(c.X, c.y, c.groups, grids, 5, 1);
  EXPECT_EQ(again.oof_probability, r.oof_probability);
}

TEST(GridSearch, TiesPreferFewerHyperparameters) {
  const Cohort c = cohort(40, 8.0, 6);
  const ClassifierGrid many{"logistic",
                            {{"C", {nlohmann::json(1.0)}}, {"penalty", {nlohmann::json("l2")}},
                             {"class_weight", {nlohmann::json("balanced")}}}};
  const ClassifierGrid few{"logistic", {{"C", {nlohmann::json(1.0)}}}};
  const CvResult r = grid_search_cv(c.X, c.y, c.groups, {many, few}, 5, 1);
  ASSERT_DOUBLE_EQ(r.table[0].mean_f1, r.table[1].mean_f1);
  EXPECT_EQ(r.best, 1u);
}

TEST(GridSearch, Errors) {
  const Cohort c = cohort(10, 1.0, 8);
  EXPECT_THROW(grid_search_cv({}, {}, {}, compact_grids(), 5, 0), DataError);
  EXPECT_THROW(grid_search_cv(c.X, c.y, c.groups, {}, 5, 0), ConfigError);
  ml::Matrix ragged = c.X;
  ragged[0].push_back(1);
  EXPECT_THROW(grid_search_cv(ragged, c.y, c.groups, compact_grids(), 5, 0), DataError);
  std::vector<int> one(c.y.size(), 1);
  EXPECT_THROW(grid_search_cv(c.X, one, c.groups, compact_grids(), 5, 0), FoldError);
}

TEST(Aggregate, Examples) {
  const auto p = aggregate_patient({{"a", 0.2}, {"b", 0.9}, {"c", 0.5}}, "p1");
  EXPECT_DOUBLE_EQ(p.probability, 0.9);
  EXPECT_EQ(p.label, 1);
  EXPECT_EQ(p.contributing_nodule, "b");
  const auto q = aggregate_patient({{"a", 0.3}}, "p2");
  EXPECT_EQ(q.label, 0);
  const auto e = aggregate_patient({}, "p3");
  EXPECT_TRUE(e.no_nodules);
  EXPECT_EQ(e.label, 0);
  EXPECT_EQ(e.probability, 0.0);
  EXPECT_EQ(aggregate_patient({{"z", 0.5}, {"b", 0.5}}, "p4").contributing_nodule, "b");
}

TEST(Aggregate, BruteForceMax) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> n(1, 8);
  for (int p = 0; p < 1000; ++p) {
    std::vector<std::pair<std::string, double>> nods;
    for (int i = n(rng); i > 0; --i) nods.emplace_back("n" + std::to_string(i), std::round(u(rng) * 20) / 20);
    double mx = 0;
    for (const auto& [id, v] : nods) mx = std::max(mx, v);
    const auto r = aggregate_patient(nods, "p");
    EXPECT_EQ(r.probability, mx);
    EXPECT_EQ(r.label, mx >= 0.5);
  }
}

TEST(Transfer, FrozenWeightsAndHeadWidth) {
  nn::ArchitectureSpec s = nn::ArchitectureSpec::shallow();
  s.conv_filters = {2, 2, 2};
  s.dense_units = 8;
  auto mal = std::make_shared<const nn::TrainedModel>(nn::build_model(s, 32, 3, {"1", "4", "5"}));
  const auto before = nn::weights_hash(*mal);
  const auto ds = generate_cube_dataset({12, 12, 12}, Scheme::S145, Separability::Size, 1);
  std::vector<TransferSample> samples;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const int label = ds.items[i].label == 0 ? 0 : 1;
    samples.push_back({&ds.items[i].cube, {double(i % 7), 0.5, 0.5}, label, "pt" + std::to_string(i / 2)});
  }
  const ClassifierGrid head{"mlp", {{"hidden", {nlohmann::json(4)}}, {"alpha", {nlohmann::json(0.01)}}}};
  const TransferModel t = transfer_head(mal, samples, head, 3, 0);
  EXPECT_EQ(nn::weights_hash(*t.malignancy), before);
  EXPECT_EQ(dense_head_sizes(int(mal->penultimate_width()) + 3), (std::vector<int>{2, 3, 5, 11}));
  const double p = t.predict(ds.items[0].cube, {1, 0.5, 0.5});
  EXPECT_GE(p, 0.0);
  EXPECT_LE(p, 1.0);

  nn::ArchitectureSpec r = nn::ArchitectureSpec::residual(10);
  r.conv_filters = {2, 2, 2};
  auto sig = std::make_shared<const nn::TrainedModel>(nn::build_model(r, 32, 3));
  EXPECT_THROW(transfer_head(sig, samples, head, 3, 0), IntegrationError);
  EXPECT_THROW(transfer_head(nullptr, samples, head, 3, 0), IntegrationError);
}
