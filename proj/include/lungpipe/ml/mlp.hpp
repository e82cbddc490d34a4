#pragma once

#include <cstdint>
#include <vector>

#include "lungpipe/ml/classifiers.hpp"

namespace lungpipe::ml {

struct MlpOptions {
  int hidden = 16;
  double alpha = 1e-4;  // L2 strength, scaled by 1 / (2 n)
  bool logistic = false;  // hidden activation: logistic sigmoid, else rectifier
  int max_iter = 200;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

/// One hidden layer and a sigmoid output trained by L-BFGS on mean binary
/// cross-entropy plus alpha * ||W||^2 / (2 n).
class MlpClassifier : public Classifier {
 public:
  explicit MlpClassifier(MlpOptions o) : opts_(o) {}
  void fit(const Matrix& X, const std::vector<int>& y) override;
  std::vector<double> predict_proba(const Matrix& X) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<MlpClassifier>(*this); }

  int iterations() const { return iterations_; }

 private:
  double forward(const std::vector<double>& theta, const std::vector<double>& x, std::vector<double>* hidden) const;

  MlpOptions opts_;
  std::size_t d_ = 0;
  std::vector<double> theta_;  // W1 (h x d), b1 (h), w2 (h), b2
  int iterations_ = 0;
};

}  // namespace lungpipe::ml
