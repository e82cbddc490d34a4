#include "lungpipe/ml/mlp.hpp"

#include <cmath>
#include <random>

#include "lungpipe/error.hpp"
#include "lungpipe/ml/lbfgs.hpp"

namespace lungpipe::ml {

namespace {

inline double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

double MlpClassifier::forward(const std::vector<double>& theta, const std::vector<double>& x, std::vector<double>* hidden) const {
  const auto h = static_cast<std::size_t>(opts_.hidden);
  const double* W1 = theta.data();
  const double* b1 = W1 + h * d_;
  const double* w2 = b1 + h;
  double z = w2[h];
  for (std::size_t u = 0; u < h; ++u) {
    double a = b1[u];
    for (std::size_t j = 0; j < d_; ++j) a += W1[u * d_ + j] * x[j];
    a = opts_.logistic ? logistic(a) : (a > 0 ? a : 0.0);
    if (hidden) (*hidden)[u] = a;
    z += w2[u] * a;
  }
  return z;
}

void MlpClassifier::fit(const Matrix& X, const std::vector<int>& y) {
  if (X.empty()) throw DataError("MLP needs training samples");
  d_ = X.front().size();
  const auto h = static_cast<std::size_t>(opts_.hidden);
  const std::size_t n = X.size();
  const std::size_t n_params = h * d_ + h + h + 1;
  std::mt19937_64 rng(opts_.seed);
  const double factor = opts_.logistic ? 2.0 : 6.0;
  theta_.assign(n_params, 0.0);
  {
    std::uniform_real_distribution<double> u1(-std::sqrt(factor / static_cast<double>(d_ + h)), std::sqrt(factor / static_cast<double>(d_ + h)));
    for (std::size_t i = 0; i < h * d_ + h; ++i) theta_[i] = u1(rng);
    std::uniform_real_distribution<double> u2(-std::sqrt(factor / static_cast<double>(h + 1)), std::sqrt(factor / static_cast<double>(h + 1)));
    for (std::size_t i = h * d_ + h; i < n_params; ++i) theta_[i] = u2(rng);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Objective obj = [&](const std::vector<double>& t, std::vector<double>& g) {
    g.assign(n_params, 0.0);
    const double* W1 = t.data();
    const double* w2 = W1 + h * d_ + h;
    double* gW1 = g.data();
    double* gb1 = gW1 + h * d_;
    double* gw2 = gb1 + h;
    std::vector<double> act(h);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = forward(t, X[i], &act);
      const double yi = y[i] ? 1.0 : 0.0;
      loss += std::max(z, 0.0) - z * yi + std::log1p(std::exp(-std::abs(z)));
      const double dz = (logistic(z) - yi) * inv_n;
      gw2[h] += dz;
      for (std::size_t u = 0; u < h; ++u) {
        gw2[u] += dz * act[u];
        const double da = dz * w2[u] * (opts_.logistic ? act[u] * (1.0 - act[u]) : (act[u] > 0 ? 1.0 : 0.0));
        if (da == 0.0) continue;
        gb1[u] += da;
        for (std::size_t j = 0; j < d_; ++j) gW1[u * d_ + j] += da * X[i][j];
      }
    }
    loss *= inv_n;
    double reg = 0.0;
    const double r = opts_.alpha * inv_n;
    for (std::size_t k = 0; k < h * d_; ++k) {
      reg += W1[k] * W1[k];
      gW1[k] += r * W1[k];
    }
    for (std::size_t u = 0; u < h; ++u) {
      reg += w2[u] * w2[u];
      gw2[u] += r * w2[u];
    }
    return loss + 0.5 * r * reg;
  };
  LbfgsOptions o;
  o.max_iter = opts_.max_iter;
  o.gtol = opts_.tol;
  iterations_ = minimize_lbfgs(obj, theta_, o).iterations;
}

std::vector<double> MlpClassifier::predict_proba(const Matrix& X) const {
  std::vector<double> out;
  out.reserve(X.size());
  for (const auto& r : X) {
    if (r.size() != d_) throw DataError("MLP feature width mismatch");
    out.push_back(logistic(forward(theta_, r, nullptr)));
  }
  return out;
}

}  // namespace lungpipe::ml
