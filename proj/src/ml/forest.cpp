#include "lungpipe/ml/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lungpipe/error.hpp"

namespace lungpipe::ml {

namespace {

double impurity(double w0, double w1, bool entropy) {
  const double w = w0 + w1;
  if (w <= 0.0) return 0.0;
  const double p0 = w0 / w, p1 = w1 / w;
  if (entropy) {
    double h = 0.0;
    if (p0 > 0) h -= p0 * std::log2(p0);
    if (p1 > 0) h -= p1 * std::log2(p1);
    return h;
  }
  return 1.0 - p0 * p0 - p1 * p1;
}

struct Builder {
  const Matrix& X;
  const std::vector<int>& y;
  const std::vector<double>& weight;  // per sample, zero when not drawn
  const ForestOptions& opts;
  std::mt19937_64& rng;
  std::size_t max_features;
  RandomForest::Tree tree;

  int build(std::vector<std::size_t>& idx, std::size_t begin, std::size_t end, int depth) {
    double w0 = 0.0, w1 = 0.0;
    for (std::size_t i = begin; i < end; ++i) (y[idx[i]] ? w1 : w0) += weight[idx[i]];
    const int node = static_cast<int>(tree.size());
    tree.push_back({});
    tree[static_cast<std::size_t>(node)].p1 = (w0 + w1) > 0.0 ? w1 / (w0 + w1) : 0.0;
    if (w0 == 0.0 || w1 == 0.0 || end - begin < 2 || (opts.max_depth >= 0 && depth >= opts.max_depth)) return node;

    const std::size_t d = X.front().size();
    std::vector<std::size_t> features(d);
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng);
    const double parent = impurity(w0, w1, opts.entropy);
    double best_gain = 1e-12;
    int best_f = -1;
    double best_t = 0.0;
    std::vector<std::size_t> order(idx.begin() + static_cast<std::ptrdiff_t>(begin), idx.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t fi = 0; fi < std::min(max_features, d); ++fi) {
      const std::size_t f = features[fi];
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return X[a][f] < X[b][f]; });
      double l0 = 0.0, l1 = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        (y[order[k]] ? l1 : l0) += weight[order[k]];
        const double a = X[order[k]][f], b = X[order[k + 1]][f];
        if (!(a < b)) continue;
        const double r0 = w0 - l0, r1 = w1 - l1;
        const double wl = l0 + l1, wr = r0 + r1;
        if (wl <= 0.0 || wr <= 0.0) continue;
        const double gain = parent - (wl * impurity(l0, l1, opts.entropy) + wr * impurity(r0, r1, opts.entropy)) / (w0 + w1);
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_t = a + (b - a) / 2.0;
          if (!(best_t > a && best_t <= b)) best_t = b;
        }
      }
    }
    if (best_f < 0) return node;
    const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(begin), idx.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](std::size_t i) { return X[i][static_cast<std::size_t>(best_f)] < best_t; });
    const auto m = static_cast<std::size_t>(mid - idx.begin());
    if (m == begin || m == end) return node;
    tree[static_cast<std::size_t>(node)].feature = best_f;
    tree[static_cast<std::size_t>(node)].threshold = best_t;
    const int l = build(idx, begin, m, depth + 1);
    const int r = build(idx, m, end, depth + 1);
    tree[static_cast<std::size_t>(node)].left = l;
    tree[static_cast<std::size_t>(node)].right = r;
    return node;
  }
};

}  // namespace

void RandomForest::fit(const Matrix& X, const std::vector<int>& y) {
  if (X.empty()) throw DataError("random forest needs training samples");
  const std::size_t n = X.size(), d = X.front().size();
  const auto cw = class_sample_weights(y, opts_.balanced);
  std::mt19937_64 rng(opts_.seed);
  const std::size_t max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
  trees_.clear();
  trees_.reserve(static_cast<std::size_t>(opts_.n_estimators));
  std::uniform_int_distribution<std::size_t> draw(0, n - 1);
  for (int t = 0; t < opts_.n_estimators; ++t) {
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) w[draw(rng)] += 1.0;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= cw[i];
      if (w[i] > 0.0) idx.push_back(i);
    }
    Builder b{X, y, w, opts_, rng, max_features, {}};
    b.build(idx, 0, idx.size(), 0);
    trees_.push_back(std::move(b.tree));
  }
}

std::vector<double> RandomForest::predict_proba(const Matrix& X) const {
  std::vector<double> out;
  out.reserve(X.size());
  for (const auto& r : X) {
    double s = 0.0;
    for (const auto& tree : trees_) {
      std::size_t node = 0;
      while (tree[node].feature >= 0) {
        node = static_cast<std::size_t>(r[static_cast<std::size_t>(tree[node].feature)] < tree[node].threshold ? tree[node].left
                                                                                                                 : tree[node].right);
      }
      s += tree[node].p1;
    }
    out.push_back(trees_.empty() ? 0.0 : s / static_cast<double>(trees_.size()));
  }
  return out;
}

}  // namespace lungpipe::ml
