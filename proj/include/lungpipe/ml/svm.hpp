#pragma once

#include <cstdint>
#include <vector>

#include "lungpipe/ml/classifiers.hpp"

namespace lungpipe::ml {

enum class SvmKernel { Rbf, Poly };

struct SvmOptions {
  double C = 1.0;
  double gamma = 0.1;
  SvmKernel kernel = SvmKernel::Rbf;
  int degree = 3;
  double coef0 = 0.0;
  bool balanced = false;
  double tol = 1e-3;
  int calibration_folds = 3;
  std::uint64_t seed = 0;
};

double kernel_value(const SvmOptions& o, const std::vector<double>& a, const std::vector<double>& b);

/// C-SVC solved by SMO with second-order working-set selection.
class Svm {
 public:
  explicit Svm(SvmOptions o) : opts_(o) {}
  void fit(const Matrix& X, const std::vector<int>& y);
  std::vector<double> decision_function(const Matrix& X) const;
  std::size_t support_count() const { return sv_.size(); }

 private:
  SvmOptions opts_;
  Matrix sv_;
  std::vector<double> coef_;  // alpha_i * y_i
  double rho_ = 0.0;
};

/// Sigmoid fit of decision values to labels; returns (A, B) with
/// P(y=1|f) = 1 / (1 + exp(A f + B)).
std::pair<double, double> platt_fit(const std::vector<double>& decision, const std::vector<int>& y);

/// SVM whose probabilities come from a sigmoid fitted on out-of-fold decision
/// values of an internal stratified cross-validation.
class CalibratedSvm : public Classifier {
 public:
  explicit CalibratedSvm(SvmOptions o) : opts_(o), svm_(o) {}
  void fit(const Matrix& X, const std::vector<int>& y) override;
  std::vector<double> predict_proba(const Matrix& X) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<CalibratedSvm>(*this); }

 private:
  SvmOptions opts_;
  Svm svm_;
  double a_ = -1.0, b_ = 0.0;
};

}  // namespace lungpipe::ml
