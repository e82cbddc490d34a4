#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lungpipe/detection.hpp"
#include "lungpipe/ml/classifiers.hpp"
#include "lungpipe/neural/model.hpp"

namespace lungpipe {

enum class IntegrationMode { Baseline, Class, Probability, Model };

std::string to_string(IntegrationMode m);
/// Accepts baseline, class, prob/probability, model. Throws ConfigError.
IntegrationMode parse_integration_mode(const std::string& s);

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> schema;
};

std::vector<std::string> baseline_schema();

/// Malignancy network output for one candidate cube.
struct MalignancyOutput {
  std::vector<double> probabilities;  // in class_order
  std::vector<double> penultimate;    // empty unless needed
  std::vector<std::string> class_order;
};

/// Run the malignancy network on a cube (penultimate activations included when `with_penultimate`).
MalignancyOutput malignancy_output(const nn::TrainedModel& model, const VoxelCube& cube, bool with_penultimate);

/// Baseline (radius, power, relative_z) plus the mode's malignancy features.
/// Throws IntegrationError when `mal` is given for Baseline or missing otherwise.
FeatureVector make_features(const NoduleCandidate& c, const MalignancyOutput* mal, IntegrationMode mode);
FeatureVector make_features(const CandidateFeatures& f, const MalignancyOutput* mal, IntegrationMode mode);

/// Categorical code of the predicted class: argmax position (1 or 1&2 -> 0, 4 -> 1, 5 -> 2).
int class_code(const MalignancyOutput& mal);

struct LabeledCandidate {
  NoduleCandidate candidate;
  int label = 0;
};

/// Every candidate inherits the patient's label.
std::vector<LabeledCandidate> propagate_labels(int patient_label, const std::vector<NoduleCandidate>& candidates);

/// A classifier family with ordered hyperparameter value lists.
struct ClassifierGrid {
  std::string family;
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> params;

  /// Cartesian product in declaration order (last key varies fastest).
  /// Radial-kernel SVM configurations drop `degree` and are deduplicated.
  std::vector<nlohmann::json> configurations() const;
};

/// The four grids of the cancer classifier search (kNN, LR, RF, SVM).
std::vector<ClassifierGrid> table_s5_grids();
/// A reduced version of the same four grids for quick runs.
std::vector<ClassifierGrid> compact_grids();
/// Dense head grid: hidden sizes floor(size/4), floor(size/3), floor(size/2), size.
ClassifierGrid dense_head_grid(int size);
std::vector<int> dense_head_sizes(int size);

struct ConfigScore {
  std::string family;
  nlohmann::json params;
  std::vector<double> fold_precision, fold_recall, fold_f1;
  double mean_precision = 0.0, std_precision = 0.0;
  double mean_recall = 0.0, std_recall = 0.0;
  double mean_f1 = 0.0, std_f1 = 0.0;

  /// "0.650+/-0.02"-style weighted F1 summary.
  std::string f1_report() const;
};

/// mean with two-decimal population standard deviation, e.g. "0.650+/-0.02".
std::string format_mean_std(double mean, double std);

struct CvResult {
  std::vector<ConfigScore> table;  // every configuration, grid order
  std::size_t best = 0;
  std::unique_ptr<ml::Classifier> model;  // winner refit on all samples
  std::vector<double> oof_probability;    // winner's out-of-fold P(y=1)
  std::vector<int> fold_of;               // fold index per sample
  int k = 0;

  const ConfigScore& best_score() const { return table.at(best); }
};

/// Patient-grouped stratified folds (same folds for every configuration).
/// Throws FoldError when a fold lacks a class.
std::vector<int> grouped_folds(const std::vector<int>& y, const std::vector<std::string>& groups, int k, std::uint64_t seed);

/// Winner: highest mean weighted F1; ties go to fewer hyperparameters, then grid order.
/// Throws FoldError, DataError (empty input, ragged rows) or ConfigError (empty grid).
CvResult grid_search_cv(const ml::Matrix& X, const std::vector<int>& y, const std::vector<std::string>& groups,
                        const std::vector<ClassifierGrid>& grids, int k = 5, std::uint64_t seed = 0);

struct PatientPrediction {
  std::string patient_id;
  double probability = 0.0;
  int label = 0;  // 1 = cancer
  std::string contributing_nodule;
  bool no_nodules = false;  // NoNodulesDetected: scored non-cancer with probability 0
};

/// Maximum nodule probability (ties to the smallest nodule id).
PatientPrediction aggregate_patient(const std::vector<std::pair<std::string, double>>& nodule_probs,
                                    const std::string& patient_id, double threshold = 0.5);

/// Frozen malignancy network with a dense head on [baseline features, penultimate activations].
struct TransferModel {
  std::shared_ptr<const nn::TrainedModel> malignancy;
  std::unique_ptr<ml::Classifier> head;
  nlohmann::json head_params;
  CvResult cv;

  double predict(const VoxelCube& cube, const CandidateFeatures& baseline) const;
};

struct TransferSample {
  const VoxelCube* cube = nullptr;
  CandidateFeatures baseline;
  int label = 0;
  std::string patient_id;
};

/// Grid-searches the dense head (default grid sized from penultimate width + 3).
/// Throws IntegrationError for a sigmoid-head malignancy network.
TransferModel transfer_head(std::shared_ptr<const nn::TrainedModel> malignancy, const std::vector<TransferSample>& samples,
                            const std::optional<ClassifierGrid>& head_grid = std::nullopt, int k = 5,
                            std::uint64_t seed = 0);

}  // namespace lungpipe
