#pragma once

#include <cstdint>
#include <vector>

#include "lungpipe/ml/classifiers.hpp"

namespace lungpipe::ml {

struct ForestOptions {
  int n_estimators = 100;
  bool entropy = false;  // gini otherwise
  int max_depth = -1;    // -1: grow until pure
  bool balanced = false;
  std::uint64_t seed = 0;
};

/// Bootstrap-aggregated CART trees with sqrt(n_features) candidate features per split.
class RandomForest : public Classifier {
 public:
  explicit RandomForest(ForestOptions o) : opts_(o) {}
  void fit(const Matrix& X, const std::vector<int>& y) override;
  std::vector<double> predict_proba(const Matrix& X) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<RandomForest>(*this); }

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double p1 = 0.0;  // weighted positive fraction
  };
  using Tree = std::vector<Node>;
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  ForestOptions opts_;
  std::vector<Tree> trees_;
};

}  // namespace lungpipe::ml
