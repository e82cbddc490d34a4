#include "lungpipe/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "lungpipe/annotations.hpp"
#include "lungpipe/error.hpp"
#include "lungpipe/evaluation.hpp"

namespace lungpipe {

using nlohmann::json;

std::string to_string(IntegrationMode m) {
  switch (m) {
    case IntegrationMode::Baseline: return "baseline";
    case IntegrationMode::Class: return "class";
    case IntegrationMode::Probability: return "prob";
    case IntegrationMode::Model: return "model";
  }
  return "baseline";
}

IntegrationMode parse_integration_mode(const std::string& s) {
  if (s == "baseline") return IntegrationMode::Baseline;
  if (s == "class") return IntegrationMode::Class;
  if (s == "prob" || s == "probability") return IntegrationMode::Probability;
  if (s == "model") return IntegrationMode::Model;
  throw ConfigError("unknown integration mode '" + s + "' (expected baseline, class, prob or model)");
}

std::vector<std::string> baseline_schema() { return {"radius", "power", "relative_z"}; }

MalignancyOutput malignancy_output(const nn::TrainedModel& model, const VoxelCube& cube, bool with_penultimate) {
  MalignancyOutput out;
  out.probabilities = nn::predict_proba(model, cube);
  out.class_order = model.class_order;
  if (with_penultimate) out.penultimate = nn::penultimate(model, cube);
  return out;
}

int class_code(const MalignancyOutput& mal) {
  if (mal.probabilities.empty()) throw IntegrationError("malignancy output has no probabilities");
  auto it = std::max_element(mal.probabilities.begin(), mal.probabilities.end());
  return static_cast<int>(it - mal.probabilities.begin());
}

FeatureVector make_features(const CandidateFeatures& f, const MalignancyOutput* mal, IntegrationMode mode) {
  FeatureVector fv;
  fv.values = {f.radius, f.power, f.relative_z};
  fv.schema = baseline_schema();
  if (mode == IntegrationMode::Baseline) {
    if (mal) throw IntegrationError("malignancy output given for baseline features");
    return fv;
  }
  if (!mal) throw IntegrationError("integration mode " + to_string(mode) + " needs malignancy output");
  switch (mode) {
    case IntegrationMode::Class:
      if (mal->probabilities.size() != 3)
        throw IntegrationError("class integration needs a 3-class malignancy output, got " +
                               std::to_string(mal->probabilities.size()));
      fv.values.push_back(class_code(*mal));
      fv.schema.push_back("malignancy_class");
      break;
    case IntegrationMode::Probability:
      if (mal->probabilities.size() != 3)
        throw IntegrationError("probability integration needs a 3-class malignancy output, got " +
                               std::to_string(mal->probabilities.size()));
      for (std::size_t i = 0; i < 3; ++i) {
        fv.values.push_back(mal->probabilities[i]);
        fv.schema.push_back("p_" + (i < mal->class_order.size() ? mal->class_order[i] : std::to_string(i)));
      }
      break;
    case IntegrationMode::Model:
      if (mal->penultimate.empty()) throw IntegrationError("model integration needs penultimate activations");
      for (std::size_t i = 0; i < mal->penultimate.size(); ++i) {
        fv.values.push_back(mal->penultimate[i]);
        fv.schema.push_back("h" + std::to_string(i));
      }
      break;
    case IntegrationMode::Baseline: break;
  }
  return fv;
}

FeatureVector make_features(const NoduleCandidate& c, const MalignancyOutput* mal, IntegrationMode mode) {
  return make_features(CandidateFeatures{c.radius, c.power, c.relative_z}, mal, mode);
}

std::vector<LabeledCandidate> propagate_labels(int patient_label, const std::vector<NoduleCandidate>& candidates) {
  std::vector<LabeledCandidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back({c, patient_label});
  return out;
}

std::vector<json> ClassifierGrid::configurations() const {
  std::vector<json> out{json::object()};
  for (const auto& [key, values] : params) {
    if (values.empty()) throw ConfigError("grid " + family + ": parameter '" + key + "' has no values");
    std::vector<json> next;
    next.reserve(out.size() * values.size());
    for (const auto& base : out)
      for (const auto& v : values) {
        json c = base;
        c[key] = v;
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  if (family != "svm") return out;
  std::vector<json> dedup;
  std::set<std::string> seen;
  for (auto c : out) {
    if (c.contains("kernel") && c["kernel"].is_string() && c["kernel"] != "poly") c.erase("degree");
    if (seen.insert(c.dump()).second) dedup.push_back(std::move(c));
  }
  return dedup;
}

namespace {

std::vector<json> nums(std::initializer_list<double> v) {
  std::vector<json> out;
  for (double x : v) out.emplace_back(x);
  return out;
}
std::vector<json> ints(std::initializer_list<int> v) {
  std::vector<json> out;
  for (int x : v) out.emplace_back(x);
  return out;
}
std::vector<json> strs(std::initializer_list<const char*> v) {
  std::vector<json> out;
  for (const char* x : v) out.emplace_back(x);
  return out;
}

}  // namespace

std::vector<ClassifierGrid> table_s5_grids() {
  const auto cs = nums({0.001, 0.01, 0.1, 0.5, 1, 3});
  std::vector<json> depth{json(nullptr), json(2), json(4), json(6)};
  return {
      {"knn", {{"n_neighbors", ints({1, 3, 5, 7, 9, 11})}, {"weights", strs({"uniform", "distance"})}}},
      {"logistic", {{"C", cs}, {"class_weight", strs({"balanced"})}, {"penalty", strs({"l1", "l2"})}}},
      {"random_forest",
       {{"n_estimators", ints({100, 150, 200, 250, 500, 750})},
        {"criterion", strs({"entropy", "gini"})},
        {"max_depth", depth},
        {"class_weight", strs({"balanced"})}}},
      {"svm",
       {{"C", cs},
        {"gamma", nums({0.005, 0.01, 0.05, 0.1, 1, 3})},
        {"kernel", strs({"radial", "poly"})},
        {"degree", ints({3, 5, 7, 9})},
        {"class_weight", strs({"balanced"})}}},
  };
}

std::vector<ClassifierGrid> compact_grids() {
  return {
      {"knn", {{"n_neighbors", ints({1, 5, 11})}, {"weights", strs({"uniform", "distance"})}}},
      {"logistic", {{"C", nums({0.01, 1, 3})}, {"class_weight", strs({"balanced"})}, {"penalty", strs({"l1", "l2"})}}},
      {"random_forest",
       {{"n_estimators", ints({100})},
        {"criterion", strs({"entropy", "gini"})},
        {"max_depth", {json(nullptr), json(4)}},
        {"class_weight", strs({"balanced"})}}},
      {"svm",
       {{"C", nums({0.5, 3})},
        {"gamma", nums({0.05, 1})},
        {"kernel", strs({"radial", "poly"})},
        {"degree", ints({3})},
        {"class_weight", strs({"balanced"})}}},
  };
}

std::vector<int> dense_head_sizes(int size) {
  if (size < 1) throw ConfigError("dense head input size must be >= 1");
  std::vector<int> out;
  for (int s : {size / 4, size / 3, size / 2, size})
    if (s >= 1 && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

ClassifierGrid dense_head_grid(int size) {
  std::vector<json> hidden;
  for (int s : dense_head_sizes(size)) hidden.emplace_back(s);
  return {"mlp",
          {{"hidden", hidden},
           {"alpha", nums({1e-5, 1e-3, 1e-2, 1, 3, 10})},
           {"activation", strs({"relu", "sigmoid"})},
           {"max_iter", ints({200})},
           {"tol", nums({1e-4})}}};
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f+/-%.2f", mean, std);
  return buf;
}

std::string ConfigScore::f1_report() const { return format_mean_std(mean_f1, std_f1); }

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

ml::Matrix take_rows(const ml::Matrix& X, const std::vector<std::size_t>& idx) {
  ml::Matrix out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(X[i]);
  return out;
}

}  // namespace

std::vector<int> grouped_folds(const std::vector<int>& y, const std::vector<std::string>& groups, int k,
                               std::uint64_t seed) {
  if (k < 2) throw ConfigError("cv.k must be >= 2");
  if (y.size() != groups.size()) throw DataError("labels and groups differ in length");
  std::map<std::string, std::size_t> gidx;
  std::vector<GroupCounts> gc;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw DataError("labels must be 0 or 1");
    auto [it, inserted] = gidx.emplace(groups[i], gc.size());
    if (inserted) gc.push_back({groups[i], {0, 0}});
    gc[it->second].counts[y[i]]++;
  }
  if (static_cast<int>(gc.size()) < k)
    throw FoldError(std::to_string(gc.size()) + " patients cannot fill " + std::to_string(k) + " folds");
  const auto side = assign_groups_stratified(gc, std::vector<double>(k, 1.0 / k), seed);
  std::vector<int> fold(y.size());
  std::vector<std::array<int, 2>> per_fold(k, {0, 0});
  for (std::size_t i = 0; i < y.size(); ++i) {
    fold[i] = side[gidx[groups[i]]];
    per_fold[fold[i]][y[i]]++;
  }
  for (int f = 0; f < k; ++f)
    for (int c = 0; c < 2; ++c)
      if (per_fold[f][c] == 0)
        throw FoldError("fold " + std::to_string(f) + " has no samples of class " + std::to_string(c));
  return fold;
}

CvResult grid_search_cv(const ml::Matrix& X, const std::vector<int>& y, const std::vector<std::string>& groups,
                        const std::vector<ClassifierGrid>& grids, int k, std::uint64_t seed) {
  if (X.empty()) throw DataError("no samples for cross-validation");
  if (X.size() != y.size()) throw DataError("feature rows and labels differ in length");
  for (const auto& r : X)
    if (r.size() != X[0].size()) throw DataError("feature rows differ in width");

  CvResult res;
  res.k = k;
  res.fold_of = grouped_folds(y, groups, k, seed);
  std::vector<std::vector<std::size_t>> train_idx(k), test_idx(k);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (int f = 0; f < k; ++f) (res.fold_of[i] == f ? test_idx : train_idx)[f].push_back(i);
  std::vector<ml::Matrix> Xtr(k), Xte(k);
  std::vector<std::vector<int>> ytr(k), yte(k);
  for (int f = 0; f < k; ++f) {
    Xtr[f] = take_rows(X, train_idx[f]);
    Xte[f] = take_rows(X, test_idx[f]);
    for (auto i : train_idx[f]) ytr[f].push_back(y[i]);
    for (auto i : test_idx[f]) yte[f].push_back(y[i]);
  }

  const std::vector<std::string> order{"0", "1"};
  std::vector<std::size_t> n_hyper;
  std::vector<double> best_oof;
  bool have_best = false;
  for (const auto& grid : grids) {
    const auto configs = grid.configurations();
    for (const auto& params : configs) {
      ConfigScore s;
      s.family = grid.family;
      s.params = params;
      std::vector<double> oof(y.size(), 0.0);
      for (int f = 0; f < k; ++f) {
        auto clf = ml::make_classifier(grid.family, params, seed + static_cast<std::uint64_t>(f));
        clf->fit(Xtr[f], ytr[f]);
        const auto p = clf->predict_proba(Xte[f]);
        std::vector<int> pred(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
          pred[i] = p[i] >= 0.5 ? 1 : 0;
          oof[test_idx[f][i]] = p[i];
        }
        const auto m = weighted_metrics(yte[f], pred, order);
        s.fold_precision.push_back(m.weighted_precision);
        s.fold_recall.push_back(m.weighted_recall);
        s.fold_f1.push_back(m.weighted_f1);
      }
      mean_std(s.fold_precision, s.mean_precision, s.std_precision);
      mean_std(s.fold_recall, s.mean_recall, s.std_recall);
      mean_std(s.fold_f1, s.mean_f1, s.std_f1);

      const std::size_t nh = params.size();
      bool better = !have_best;
      if (have_best) {
        const auto& b = res.table[res.best];
        const double d = s.mean_f1 - b.mean_f1;
        better = d > 1e-12 || (std::abs(d) <= 1e-12 && nh < n_hyper[res.best]);
      }
      n_hyper.push_back(nh);
      res.table.push_back(std::move(s));
      if (better) {
        res.best = res.table.size() - 1;
        best_oof = std::move(oof);
        have_best = true;
      }
    }
  }
  if (res.table.empty()) throw ConfigError("classifier grid is empty");
  res.oof_probability = std::move(best_oof);
  const auto& win = res.table[res.best];
  res.model = ml::make_classifier(win.family, win.params, seed);
  res.model->fit(X, y);
  return res;
}

PatientPrediction aggregate_patient(const std::vector<std::pair<std::string, double>>& nodule_probs,
                                    const std::string& patient_id, double threshold) {
  PatientPrediction p;
  p.patient_id = patient_id;
  if (nodule_probs.empty()) {
    p.no_nodules = true;
    return p;
  }
  const std::pair<std::string, double>* best = nullptr;
  for (const auto& np : nodule_probs)
    if (!best || np.second > best->second || (np.second == best->second && np.first < best->first)) best = &np;
  p.probability = best->second;
  p.contributing_nodule = best->first;
  p.label = p.probability >= threshold ? 1 : 0;
  return p;
}

double TransferModel::predict(const VoxelCube& cube, const CandidateFeatures& baseline) const {
  const auto mal = malignancy_output(*malignancy, cube, true);
  const auto fv = make_features(baseline, &mal, IntegrationMode::Model);
  return head->predict_proba({fv.values}).at(0);
}

TransferModel transfer_head(std::shared_ptr<const nn::TrainedModel> malignancy, const std::vector<TransferSample>& samples,
                            const std::optional<ClassifierGrid>& head_grid, int k, std::uint64_t seed) {
  if (!malignancy) throw IntegrationError("no malignancy network");
  if (!malignancy->softmax())
    throw IntegrationError("transfer learning needs a softmax malignancy network; got a sigmoid head");
  if (samples.empty()) throw DataError("no samples for the transfer head");

  std::vector<const Grid3<float>*> cubes;
  for (const auto& s : samples) {
    if (!s.cube) throw DataError("transfer sample without a cube");
    cubes.push_back(&s.cube->values);
  }
  const auto hidden = nn::penultimate(*malignancy, cubes);
  ml::Matrix X;
  std::vector<int> y;
  std::vector<std::string> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    MalignancyOutput mal;
    mal.penultimate = hidden[i];
    X.push_back(make_features(samples[i].baseline, &mal, IntegrationMode::Model).values);
    y.push_back(samples[i].label);
    groups.push_back(samples[i].patient_id);
  }
  const auto grid = head_grid ? *head_grid : dense_head_grid(static_cast<int>(X[0].size()));

  TransferModel tm;
  tm.malignancy = std::move(malignancy);
  tm.cv = grid_search_cv(X, y, groups, {grid}, k, seed);
  tm.head = tm.cv.model->clone();
  tm.head_params = tm.cv.best_score().params;
  return tm;
}

}  // namespace lungpipe
