#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace lungpipe::ml {

using Matrix = std::vector<std::vector<double>>;

/// Binary classifier over dense feature rows; labels are 0/1.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Matrix& X, const std::vector<int>& y) = 0;
  /// P(y = 1) per row.
  virtual std::vector<double> predict_proba(const Matrix& X) const = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;

  std::vector<int> predict(const Matrix& X, double threshold = 0.5) const;
};

/// Column-wise standardization; zero-variance columns keep scale 1.
class StandardScaler {
 public:
  void fit(const Matrix& X);
  Matrix transform(const Matrix& X) const;
  std::vector<double> transform_row(const std::vector<double>& row) const;

 private:
  std::vector<double> mean_, scale_;
};

/// `balanced` weights n / (2 * n_c); otherwise all ones.
std::vector<double> class_sample_weights(const std::vector<int>& y, bool balanced);

class KNeighbors : public Classifier {
 public:
  KNeighbors(int n_neighbors, bool distance_weights) : k_(n_neighbors), distance_(distance_weights) {}
  void fit(const Matrix& X, const std::vector<int>& y) override;
  std::vector<double> predict_proba(const Matrix& X) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<KNeighbors>(*this); }

 private:
  int k_;
  bool distance_;
  Matrix X_;
  std::vector<int> y_;
};

/// Minimizes C * sum_i w_i * logloss_i + R(w) with R = ||w||^2 / 2 (l2,
/// L-BFGS) or ||w||_1 (l1, accelerated proximal gradient). Intercept unpenalized.
class LogisticRegression : public Classifier {
 public:
  LogisticRegression(double C, bool l1, bool balanced, int max_iter = 1000)
      : C_(C), l1_(l1), balanced_(balanced), max_iter_(max_iter) {}
  void fit(const Matrix& X, const std::vector<int>& y) override;
  std::vector<double> predict_proba(const Matrix& X) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<LogisticRegression>(*this); }

  const std::vector<double>& coef() const { return w_; }
  double intercept() const { return b_; }

 private:
  double C_;
  bool l1_, balanced_;
  int max_iter_;
  std::vector<double> w_;
  double b_ = 0.0;
};

/// Standardizes features, then delegates.
class ScaledClassifier : public Classifier {
 public:
  explicit ScaledClassifier(std::unique_ptr<Classifier> inner) : inner_(std::move(inner)) {}
  ScaledClassifier(const ScaledClassifier& o) : scaler_(o.scaler_), inner_(o.inner_->clone()) {}
  void fit(const Matrix& X, const std::vector<int>& y) override;
  std::vector<double> predict_proba(const Matrix& X) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<ScaledClassifier>(*this); }

 private:
  StandardScaler scaler_;
  std::unique_ptr<Classifier> inner_;
};

/// Families: "knn", "logistic", "random_forest", "svm", "mlp". Parameter keys
/// follow the grid tables (n_neighbors, weights, C, penalty, class_weight,
/// n_estimators, criterion, max_depth, gamma, kernel, degree, hidden, alpha,
/// activation). The result standardizes its inputs. Throws ConfigError.
std::unique_ptr<Classifier> make_classifier(const std::string& family, const nlohmann::json& params,
                                            std::uint64_t seed);

}  // namespace lungpipe::ml
