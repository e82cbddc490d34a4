#include "lungpipe/ml/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lungpipe/error.hpp"
#include "lungpipe/ml/forest.hpp"
#include "lungpipe/ml/lbfgs.hpp"
#include "lungpipe/ml/mlp.hpp"
#include "lungpipe/ml/svm.hpp"

namespace lungpipe::ml {

std::vector<int> Classifier::predict(const Matrix& X, double threshold) const {
  const auto p = predict_proba(X);
  std::vector<int> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= threshold ? 1 : 0;
  return out;
}

void StandardScaler::fit(const Matrix& X) {
  const std::size_t d = X.empty() ? 0 : X.front().size();
  mean_.assign(d, 0.0);
  scale_.assign(d, 1.0);
  if (X.empty()) return;
  const double n = static_cast<double>(X.size());
  for (const auto& r : X) {
    for (std::size_t j = 0; j < d; ++j) mean_[j] += r[j];
  }
  for (double& m : mean_) m /= n;
  std::vector<double> var(d, 0.0);
  for (const auto& r : X) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - mean_[j]) * (r[j] - mean_[j]);
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double s = std::sqrt(var[j] / n);
    scale_[j] = s > 1e-12 ? s : 1.0;
  }
}

std::vector<double> StandardScaler::transform_row(const std::vector<double>& row) const {
  if (row.size() != mean_.size()) throw DataError("feature width does not match the fitted scaler");
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean_[j]) / scale_[j];
  return out;
}

Matrix StandardScaler::transform(const Matrix& X) const {
  Matrix out;
  out.reserve(X.size());
  for (const auto& r : X) out.push_back(transform_row(r));
  return out;
}

std::vector<double> class_sample_weights(const std::vector<int>& y, bool balanced) {
  std::vector<double> w(y.size(), 1.0);
  if (!balanced || y.empty()) return w;
  const double n = static_cast<double>(y.size());
  const double n1 = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double n0 = n - n1;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double nc = y[i] ? n1 : n0;
    w[i] = n / (2.0 * nc);
  }
  return w;
}

// ---- kNN ----

void KNeighbors::fit(const Matrix& X, const std::vector<int>& y) {
  if (X.empty()) throw DataError("kNN needs at least one training sample");
  X_ = X;
  y_ = y;
}

std::vector<double> KNeighbors::predict_proba(const Matrix& X) const {
  std::vector<double> out;
  out.reserve(X.size());
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), X_.size());
  std::vector<std::pair<double, std::size_t>> d(X_.size());
  for (const auto& q : X) {
    for (std::size_t i = 0; i < X_.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) s += (q[j] - X_[i][j]) * (q[j] - X_[i][j]);
      d[i] = {std::sqrt(s), i};
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double pos = 0.0, total = 0.0;
    const bool exact = distance_ && d.front().first == 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double w = 1.0;
      if (distance_) {
        if (exact) {
          w = d[i].first == 0.0 ? 1.0 : 0.0;
        } else {
          w = 1.0 / d[i].first;
        }
      }
      total += w;
      if (y_[d[i].second]) pos += w;
    }
    out.push_back(total > 0.0 ? pos / total : 0.0);
  }
  return out;
}

// ---- Logistic regression ----

namespace {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-m)) computed stably.
inline double log1pexp_neg(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

}  // namespace

void LogisticRegression::fit(const Matrix& X, const std::vector<int>& y) {
  if (X.empty()) throw DataError("logistic regression needs training samples");
  if (!(C_ > 0.0)) throw ConfigError("logistic regression C must be positive");
  const std::size_t n = X.size(), d = X.front().size();
  const auto sw = class_sample_weights(y, balanced_);
  // Smooth part: C * sum w_i log(1 + exp(-s_i z_i)), s_i = +-1.
  auto smooth = [&](const std::vector<double>& theta, std::vector<double>& grad) {
    grad.assign(d + 1, 0.0);
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = theta[d];
      for (std::size_t j = 0; j < d; ++j) z += theta[j] * X[i][j];
      const double s = y[i] ? 1.0 : -1.0;
      f += C_ * sw[i] * log1pexp_neg(s * z);
      const double g = -C_ * sw[i] * s * sigmoid(-s * z);
      for (std::size_t j = 0; j < d; ++j) grad[j] += g * X[i][j];
      grad[d] += g;
    }
    return f;
  };
  std::vector<double> theta(d + 1, 0.0);
  if (!l1_) {
    Objective obj = [&](const std::vector<double>& t, std::vector<double>& g) {
      double f = smooth(t, g);
      for (std::size_t j = 0; j < d; ++j) {
        f += 0.5 * t[j] * t[j];
        g[j] += t[j];
      }
      return f;
    };
    LbfgsOptions o;
    o.max_iter = max_iter_;
    o.gtol = 1e-6;
    minimize_lbfgs(obj, theta, o);
  } else {
    // FISTA with the Lipschitz bound of the smooth part.
    double lip = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 1.0;
      for (double v : X[i]) sq += v * v;
      lip += sw[i] * sq;
    }
    lip = std::max(C_ * lip / 4.0, 1e-12);
    const double step = 1.0 / lip;
    std::vector<double> z = theta, prev = theta, g;
    double t = 1.0;
    for (int it = 0; it < max_iter_ * 5; ++it) {
      smooth(z, g);
      std::vector<double> next(d + 1);
      for (std::size_t j = 0; j <= d; ++j) {
        const double v = z[j] - step * g[j];
        next[j] = j == d ? v : std::copysign(std::max(std::abs(v) - step, 0.0), v);
      }
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      double change = 0.0;
      for (std::size_t j = 0; j <= d; ++j) {
        z[j] = next[j] + (t - 1.0) / t_next * (next[j] - prev[j]);
        change = std::max(change, std::abs(next[j] - prev[j]));
      }
      prev = next;
      t = t_next;
      if (change < 1e-8) break;
    }
    theta = prev;
  }
  w_.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  b_ = theta[d];
}

std::vector<double> LogisticRegression::predict_proba(const Matrix& X) const {
  std::vector<double> out;
  out.reserve(X.size());
  for (const auto& r : X) {
    double z = b_;
    for (std::size_t j = 0; j < w_.size(); ++j) z += w_[j] * r[j];
    out.push_back(sigmoid(z));
  }
  return out;
}

// ---- Scaling wrapper and factory ----

void ScaledClassifier::fit(const Matrix& X, const std::vector<int>& y) {
  scaler_.fit(X);
  inner_->fit(scaler_.transform(X), y);
}

std::vector<double> ScaledClassifier::predict_proba(const Matrix& X) const {
  return inner_->predict_proba(scaler_.transform(X));
}

namespace {

template <typename T>
T param(const nlohmann::json& p, const char* key, T fallback) {
  if (!p.contains(key)) return fallback;
  try {
    return p.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("hyperparameter '") + key + "' has the wrong type");
  }
}

bool balanced_weight(const nlohmann::json& p) {
  const std::string cw = param<std::string>(p, "class_weight", "none");
  if (cw != "balanced" && cw != "none") throw ConfigError("class_weight must be 'balanced' or 'none'");
  return cw == "balanced";
}

}  // namespace

std::unique_ptr<Classifier> make_classifier(const std::string& family, const nlohmann::json& p, std::uint64_t seed) {
  std::unique_ptr<Classifier> inner;
  if (family == "knn") {
    const int k = param<int>(p, "n_neighbors", 5);
    const std::string w = param<std::string>(p, "weights", "uniform");
    if (k < 1) throw ConfigError("n_neighbors must be positive");
    if (w != "uniform" && w != "distance") throw ConfigError("knn weights must be 'uniform' or 'distance'");
    inner = std::make_unique<KNeighbors>(k, w == "distance");
  } else if (family == "logistic") {
    const double C = param<double>(p, "C", 1.0);
    const std::string pen = param<std::string>(p, "penalty", "l2");
    if (!(C > 0)) throw ConfigError("C must be positive");
    if (pen != "l1" && pen != "l2") throw ConfigError("penalty must be 'l1' or 'l2'");
    inner = std::make_unique<LogisticRegression>(C, pen == "l1", balanced_weight(p));
  } else if (family == "random_forest") {
    ForestOptions o;
    o.n_estimators = param<int>(p, "n_estimators", 100);
    const std::string crit = param<std::string>(p, "criterion", "gini");
    if (crit != "gini" && crit != "entropy") throw ConfigError("criterion must be 'gini' or 'entropy'");
    o.entropy = crit == "entropy";
    o.max_depth = p.contains("max_depth") && !p["max_depth"].is_null() ? param<int>(p, "max_depth", -1) : -1;
    o.balanced = balanced_weight(p);
    o.seed = seed;
    if (o.n_estimators < 1) throw ConfigError("n_estimators must be positive");
    inner = std::make_unique<RandomForest>(o);
  } else if (family == "svm") {
    SvmOptions o;
    o.C = param<double>(p, "C", 1.0);
    o.gamma = param<double>(p, "gamma", 0.1);
    const std::string kern = param<std::string>(p, "kernel", "radial");
    if (kern == "radial" || kern == "rbf") {
      o.kernel = SvmKernel::Rbf;
    } else if (kern == "poly") {
      o.kernel = SvmKernel::Poly;
    } else {
      throw ConfigError("svm kernel must be 'radial' or 'poly'");
    }
    o.degree = param<int>(p, "degree", 3);
    o.balanced = balanced_weight(p);
    o.seed = seed;
    if (!(o.C > 0) || !(o.gamma > 0) || o.degree < 1) throw ConfigError("svm C, gamma and degree must be positive");
    inner = std::make_unique<CalibratedSvm>(o);
  } else if (family == "mlp") {
    MlpOptions o;
    o.hidden = param<int>(p, "hidden", 16);
    o.alpha = param<double>(p, "alpha", 1e-4);
    const std::string act = param<std::string>(p, "activation", "relu");
    if (act == "relu") {
      o.logistic = false;
    } else if (act == "sigmoid" || act == "logistic") {
      o.logistic = true;
    } else {
      throw ConfigError("mlp activation must be 'relu' or 'sigmoid'");
    }
    o.max_iter = param<int>(p, "max_iter", 200);
    o.tol = param<double>(p, "tol", 1e-4);
    o.seed = seed;
    if (o.hidden < 1 || o.alpha < 0) throw ConfigError("mlp hidden must be positive and alpha non-negative");
    inner = std::make_unique<MlpClassifier>(o);
  } else {
    throw ConfigError("unknown classifier family '" + family + "'");
  }
  return std::make_unique<ScaledClassifier>(std::move(inner));
}

}  // namespace lungpipe::ml
