#include "lungpipe/ml/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lungpipe/error.hpp"

namespace lungpipe::ml {

double kernel_value(const SvmOptions& o, const std::vector<double>& a, const std::vector<double>& b) {
  if (o.kernel == SvmKernel::Rbf) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-o.gamma * s);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return std::pow(o.gamma * s + o.coef0, o.degree);
}

void Svm::fit(const Matrix& X, const std::vector<int>& labels) {
  const std::size_t n = X.size();
  if (n == 0) throw DataError("SVM needs training samples");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] ? 1.0 : -1.0;
  const auto cw = class_sample_weights(labels, opts_.balanced);
  std::vector<double> Cb(n);
  for (std::size_t i = 0; i < n; ++i) Cb[i] = opts_.C * cw[i];

  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = kernel_value(opts_, X[i], X[j]);
  }
  auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K[i * n + j]; };
  std::vector<double> alpha(n, 0.0), G(n, -1.0);
  auto upper = [&](std::size_t t) { return alpha[t] >= Cb[t]; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  constexpr double kTau = 1e-12;
  const long max_iter = std::max<long>(10000, 100 * static_cast<long>(n));

  for (long iter = 0; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = gmax;
    std::ptrdiff_t gi = -1, gj = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] > 0) {
        if (!upper(t) && -G[t] >= gmax) {
          gmax = -G[t];
          gi = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && G[t] >= gmax) {
        gmax = G[t];
        gi = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (gi < 0) break;
    const auto i = static_cast<std::size_t>(gi);
    double obj_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (y[j] > 0) {
        if (lower(j)) continue;
        const double diff = gmax + G[j];
        gmax2 = std::max(gmax2, G[j]);
        if (diff > 0) {
          double quad = K[i * n + i] + K[j * n + j] - 2.0 * K[i * n + j];
          if (quad <= 0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) {
            gj = static_cast<std::ptrdiff_t>(j);
            obj_min = obj;
          }
        }
      } else {
        if (upper(j)) continue;
        const double diff = gmax - G[j];
        gmax2 = std::max(gmax2, -G[j]);
        if (diff > 0) {
          double quad = K[i * n + i] + K[j * n + j] - 2.0 * K[i * n + j];
          if (quad <= 0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) {
            gj = static_cast<std::ptrdiff_t>(j);
            obj_min = obj;
          }
        }
      }
    }
    if (gmax + gmax2 < opts_.tol || gj < 0) break;
    const auto j = static_cast<std::size_t>(gj);
    const double Ci = Cb[i], Cj = Cb[j];
    const double ai_old = alpha[i], aj_old = alpha[j];
    if (y[i] != y[j]) {
      double quad = K[i * n + i] + K[j * n + j] + 2.0 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > Ci - Cj) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = Ci - diff;
        }
      } else if (alpha[j] > Cj) {
        alpha[j] = Cj;
        alpha[i] = Cj + diff;
      }
    } else {
      double quad = K[i * n + i] + K[j * n + j] - 2.0 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > Ci) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = sum - Ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > Cj) {
        if (alpha[j] > Cj) {
          alpha[j] = Cj;
          alpha[i] = sum - Cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - ai_old, dj = alpha[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(i, t) * di + Q(j, t) * dj;
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  rho_ = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  if (!std::isfinite(rho_)) rho_ = 0.0;
  sv_.clear();
  coef_.clear();
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      sv_.push_back(X[t]);
      coef_.push_back(alpha[t] * y[t]);
    }
  }
}

std::vector<double> Svm::decision_function(const Matrix& X) const {
  std::vector<double> out;
  out.reserve(X.size());
  for (const auto& r : X) {
    double s = -rho_;
    for (std::size_t k = 0; k < sv_.size(); ++k) s += coef_[k] * kernel_value(opts_, sv_[k], r);
    out.push_back(std::isfinite(s) ? s : (s > 0 ? 1e300 : -1e300));
  }
  return out;
}

std::pair<double, double> platt_fit(const std::vector<double>& dec, const std::vector<int>& labels) {
  const std::size_t n = dec.size();
  double prior1 = 0, prior0 = 0;
  for (int l : labels) (l ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] ? hi : lo;
  double A = 0.0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  constexpr double kMinStep = 1e-10, kSigma = 1e-12, kEps = 1e-5;
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fapb = dec[i] * a + b;
      f += fapb >= 0 ? t[i] * fapb + std::log1p(std::exp(-fapb)) : (t[i] - 1.0) * fapb + std::log1p(std::exp(fapb));
    }
    return f;
  };
  double fval = objective(A, B);
  for (int it = 0; it < 100; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fapb = dec[i] * A + B;
      double p, q;
      if (fapb >= 0) {
        p = std::exp(-fapb) / (1.0 + std::exp(-fapb));
        q = 1.0 / (1.0 + std::exp(-fapb));
      } else {
        p = 1.0 / (1.0 + std::exp(fapb));
        q = std::exp(fapb) / (1.0 + std::exp(fapb));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= kMinStep) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 0.0001 * step * gd) {
        A = nA;
        B = nB;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {A, B};
}

void CalibratedSvm::fit(const Matrix& X, const std::vector<int>& y) {
  const std::size_t n = X.size();
  if (n == 0) throw DataError("SVM needs training samples");
  const int k = std::max(2, opts_.calibration_folds);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (y[i] ? pos : neg).push_back(i);
  std::vector<double> dec(n, 0.0);
  const bool cv_ok = pos.size() >= static_cast<std::size_t>(k) && neg.size() >= static_cast<std::size_t>(k);
  if (cv_ok) {
    std::mt19937_64 rng(opts_.seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<int> fold(n, 0);
    for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
      Matrix Xtr, Xte;
      std::vector<int> ytr;
      std::vector<std::size_t> te;
      for (std::size_t i = 0; i < n; ++i) {
        if (fold[i] == f) {
          Xte.push_back(X[i]);
          te.push_back(i);
        } else {
          Xtr.push_back(X[i]);
          ytr.push_back(y[i]);
        }
      }
      Svm inner(opts_);
      inner.fit(Xtr, ytr);
      const auto d = inner.decision_function(Xte);
      for (std::size_t i = 0; i < te.size(); ++i) dec[te[i]] = d[i];
    }
  }
  svm_ = Svm(opts_);
  svm_.fit(X, y);
  if (!cv_ok) dec = svm_.decision_function(X);
  std::tie(a_, b_) = platt_fit(dec, y);
}

std::vector<double> CalibratedSvm::predict_proba(const Matrix& X) const {
  auto d = svm_.decision_function(X);
  for (double& v : d) {
    const double z = a_ * v + b_;
    v = z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
  }
  return d;
}

}  // namespace lungpipe::ml
