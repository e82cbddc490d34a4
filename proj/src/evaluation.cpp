#include "lungpipe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lungpipe/error.hpp"

namespace lungpipe {

ConfusionMatrix ConfusionMatrix::from_labels(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                             const std::vector<std::string>& classes) {
  if (y_true.size() != y_pred.size()) throw ValidationError("y_true and y_pred differ in length");
  ConfusionMatrix cm;
  cm.classes = classes;
  const std::size_t k = classes.size();
  cm.counts.assign(k, std::vector<long long>(k, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      throw ValidationError("label outside the class order at position " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

ConfusionMatrix ConfusionMatrix::binary(long long tp, long long fp, long long fn, long long tn,
                                        const std::vector<std::string>& classes) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw ValidationError("confusion counts must be non-negative");
  if (classes.size() != 2) throw ValidationError("binary confusion needs two class names");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts = {{tn, fp}, {fn, tp}};
  return cm;
}

long long ConfusionMatrix::support(std::size_t cls) const {
  return std::accumulate(counts.at(cls).begin(), counts.at(cls).end(), 0LL);
}

long long ConfusionMatrix::total() const {
  long long s = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) s += support(i);
  return s;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes.size();
  if (cm.counts.size() != k) throw ValidationError("confusion matrix shape does not match its classes");
  const long long total = cm.total();
  if (total == 0) throw EmptyEvaluation("no items to evaluate");
  MetricsReport r;
  r.support = total;
  long long correct = 0;
  double macro = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    long long tp = cm.counts[c][c], pred = 0;
    for (std::size_t t = 0; t < k; ++t) pred += cm.counts[t][c];
    const long long sup = cm.support(c);
    correct += tp;
    ClassMetrics m;
    m.label = cm.classes[c];
    m.support = sup;
    if (pred > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(pred);
    } else {
      r.flags.push_back("precision undefined for class " + m.label);
    }
    if (sup > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(sup);
    } else {
      r.flags.push_back("recall undefined for class " + m.label);
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      r.flags.push_back("f1 undefined for class " + m.label);
    }
    const double w = static_cast<double>(sup) / static_cast<double>(total);
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
    macro += m.f1;
    r.per_class.push_back(m);
  }
  r.macro_f1 = k ? macro / static_cast<double>(k) : 0.0;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return r;
}

MetricsReport weighted_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                               const std::vector<std::string>& class_order) {
  if (y_true.empty() && y_pred.empty()) throw EmptyEvaluation("no labels to evaluate");
  return metrics_from_confusion(ConfusionMatrix::from_labels(y_true, y_pred, class_order));
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"weighted_precision", r.weighted_precision},
                     {"weighted_recall", r.weighted_recall},
                     {"weighted_f1", r.weighted_f1},
                     {"macro_f1", r.macro_f1},
                     {"accuracy", r.accuracy},
                     {"support", r.support},
                     {"flags", r.flags}};
  j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    j["per_class"].push_back(
        {{"label", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
}

RuleBasedResult rule_based_patient_eval(const std::map<std::string, std::vector<MalignancyClass>>& nodule_classes,
                                        const std::map<std::string, int>& patient_truth) {
  if (patient_truth.empty()) throw EmptyEvaluation("no patients to evaluate");
  for (const auto& [scan, classes] : nodule_classes) {
    if (!patient_truth.count(scan)) throw ValidationError("prediction for scan '" + scan + "' without a truth label");
  }
  RuleBasedResult res;
  std::vector<int> yt, yp;
  for (const auto& [scan, truth] : patient_truth) {
    int pred = 0;
    const auto it = nodule_classes.find(scan);
    if (it != nodule_classes.end()) {
      for (auto c : it->second) {
        if (c == MalignancyClass::C4 || c == MalignancyClass::C5) pred = 1;
      }
    }
    const int t = truth ? 1 : 0;
    res.predicted[scan] = pred;
    yt.push_back(t);
    yp.push_back(pred);
    if (t && pred) ++res.tp;
    if (!t && pred) ++res.fp;
    if (t && !pred) ++res.fn;
    if (!t && !pred) ++res.tn;
  }
  res.report = weighted_metrics(yt, yp, {"non-cancer", "cancer"});
  return res;
}

std::vector<FrocPoint> froc(const std::vector<ScoredCandidate>& candidates, const std::vector<GroundTruthNodule>& truth,
                            std::size_t n_scans) {
  if (n_scans == 0) throw EmptyEvaluation("FROC needs at least one scan");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  for (const auto& c : candidates) {
    if (!std::isfinite(c.score)) throw ValidationError("candidate scores must be finite");
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].score > candidates[b].score; });
  std::vector<std::vector<std::size_t>> hits(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (candidates[c].scan_id == truth[g].scan_id &&
          distance(candidates[c].center_world, truth[g].center_world) < truth[g].diameter_mm / 2.0) {
        hits[c].push_back(g);
      }
    }
  }
  std::vector<bool> found(truth.size(), false);
  std::size_t n_found = 0, fps = 0;
  const double denom = truth.empty() ? 1.0 : static_cast<double>(truth.size());
  std::vector<FrocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (std::size_t i = 0; i < order.size();) {
    const double t = candidates[order[i]].score;
    for (; i < order.size() && candidates[order[i]].score == t; ++i) {
      const auto& h = hits[order[i]];
      if (h.empty()) ++fps;
      for (std::size_t g : h) {
        if (!found[g]) {
          found[g] = true;
          ++n_found;
        }
      }
    }
    curve.push_back({t, static_cast<double>(fps) / static_cast<double>(n_scans), static_cast<double>(n_found) / denom});
  }
  return curve;
}

double froc_score(const std::vector<FrocPoint>& curve) {
  const double levels[] = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  double total = 0.0;
  for (double level : levels) {
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.fp_per_scan <= level) best = std::max(best, p.sensitivity);
    }
    total += best;
  }
  return total / 7.0;
}

PrCurve pr_curve(const std::vector<int>& y_true, const std::vector<double>& scores) {
  if (y_true.size() != scores.size()) throw ValidationError("labels and scores differ in length");
  PrCurve out;
  if (scores.empty()) {
    out.warnings.push_back("empty input: degenerate curve");
    return out;
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("scores must be finite");
  }
  const long long P = std::count_if(y_true.begin(), y_true.end(), [](int v) { return v != 0; });
  if (P == 0 || P == static_cast<long long>(y_true.size())) {
    out.warnings.push_back("single-class truth: degenerate curve");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  long long tp = 0, fp = 0;
  std::vector<PrPoint> desc;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (y_true[order[i]] ? tp : fp) += 1;
    PrPoint p;
    p.threshold = t;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = P > 0 ? static_cast<double>(tp) / static_cast<double>(P) : 0.0;
    desc.push_back(p);
  }
  double prev_recall = 0.0;
  for (const auto& p : desc) {
    out.average_precision += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  out.points.assign(desc.rbegin(), desc.rend());
  return out;
}

}  // namespace lungpipe
