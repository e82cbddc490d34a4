#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "lungpipe/annotations.hpp"
#include "lungpipe/grid.hpp"

namespace lungpipe {

/// counts[t][p]: items of true class t predicted as p.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<long long>> counts;

  static ConfusionMatrix from_labels(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                     const std::vector<std::string>& classes);
  /// Binary matrix (classes {negative, positive}) from the four counts.
  static ConfusionMatrix binary(long long tp, long long fp, long long fn, long long tn,
                                const std::vector<std::string>& classes = {"0", "1"});
  long long support(std::size_t cls) const;
  long long total() const;
};

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  long long support = 0;
  /// Zero-denominator cases reported as 0, e.g. "precision undefined for class 4".
  std::vector<std::string> flags;

  const ClassMetrics& positive() const { return per_class.back(); }
};

/// Throws EmptyEvaluation when the matrix holds no items.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

/// Throws EmptyEvaluation on empty input, ValidationError on unequal lengths
/// or labels outside the class order.
MetricsReport weighted_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                               const std::vector<std::string>& class_order);

void to_json(nlohmann::json& j, const MetricsReport& r);

struct RuleBasedResult {
  MetricsReport report;               // classes {non-cancer, cancer}
  std::map<std::string, int> predicted;  // scan id -> 0/1
  long long tp = 0, fp = 0, fn = 0, tn = 0;
};

/// A patient is positive iff any of its nodules is predicted class 4 or 5.
/// Scans absent from `nodule_classes` count as having no nodules. Throws
/// ValidationError for predictions on scans missing from the truth.
RuleBasedResult rule_based_patient_eval(const std::map<std::string, std::vector<MalignancyClass>>& nodule_classes,
                                        const std::map<std::string, int>& patient_truth);

struct ScoredCandidate {
  std::string scan_id;
  Vec3 center_world;
  double score = 0.0;
};

struct GroundTruthNodule {
  std::string scan_id;
  Vec3 center_world;
  double diameter_mm = 0.0;
};

struct FrocPoint {
  double threshold = 0.0;
  double fp_per_scan = 0.0;
  double sensitivity = 0.0;
};

/// Hit: candidate centre closer than diameter/2 to a nodule of its scan. A
/// candidate hitting any nodule is never a false positive. One point per
/// distinct score (descending thresholds), preceded by (0, 0) at +inf.
/// Throws EmptyEvaluation when n_scans is zero.
std::vector<FrocPoint> froc(const std::vector<ScoredCandidate>& candidates,
                            const std::vector<GroundTruthNodule>& truth, std::size_t n_scans);

/// Mean sensitivity at 1/8, 1/4, 1/2, 1, 2, 4, 8 false positives per scan
/// (step interpolation: best sensitivity with fp_per_scan <= level).
double froc_score(const std::vector<FrocPoint>& curve);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // ascending threshold
  double average_precision = 0.0;
  std::vector<std::string> warnings;
};

/// One point per distinct score; predicted positive when score >= threshold.
/// Throws ValidationError on non-finite scores or unequal lengths.
PrCurve pr_curve(const std::vector<int>& y_true, const std::vector<double>& scores);

}  // namespace lungpipe
