#include "lungpipe/neural/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lungpipe/error.hpp"

namespace lungpipe::nn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be a non-negative number");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be at least 1");
  augmentation.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"early_stop_patience", c.early_stop_patience},
                     {"loss", c.loss == LossKind::CategoricalCrossEntropy ? "categorical_crossentropy" : "binary_crossentropy"},
                     {"seed", c.seed},
                     {"augmentation", c.augmentation}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    c = TrainConfig{};
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    const std::string loss = j.value("loss", std::string("categorical_crossentropy"));
    if (loss == "categorical_crossentropy") {
      c.loss = LossKind::CategoricalCrossEntropy;
    } else if (loss == "binary_crossentropy") {
      c.loss = LossKind::BinaryCrossEntropy;
    } else {
      throw ConfigError("unknown loss '" + loss + "'");
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("augmentation")) c.augmentation = j["augmentation"].get<AugmentationConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
}

double loss_and_grad(const Tensor& logits, const std::vector<int>& labels, OutputKind kind, Tensor* grad) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (grad) *grad = Tensor(logits.shape, 0.0);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.ptr() + i * k;
    const int y = labels[i];
    if (kind == OutputKind::Sigmoid) {
      const double t = y ? 1.0 : 0.0;
      total += std::max(z[0], 0.0) - z[0] * t + std::log1p(std::exp(-std::abs(z[0])));
      if (grad) grad->data[i] = (1.0 / (1.0 + std::exp(-z[0])) - t) * inv_n;
    } else {
      const double mx = *std::max_element(z, z + k);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - mx);
      const double lse = mx + std::log(s);
      total += lse - z[y];
      if (grad) {
        for (std::size_t j = 0; j < k; ++j) {
          grad->data[i * k + j] = (std::exp(z[j] - lse) - (static_cast<int>(j) == y ? 1.0 : 0.0)) * inv_n;
        }
      }
    }
  }
  return total * inv_n;
}

namespace {

Tensor batch_tensor(const std::vector<const Grid3<float>*>& cubes, int side) { return cubes_to_tensor(cubes, side); }

void check_labels(const std::vector<LabeledCube>& set, const TrainedModel& m, const char* which) {
  const int n_classes = m.softmax() ? m.spec.n_outputs : 2;
  for (const auto& c : set) {
    if (c.label < 0 || c.label >= n_classes) {
      throw DataError(std::string(which) + " label " + std::to_string(c.label) + " outside [0, " +
                      std::to_string(n_classes) + ")");
    }
  }
}

struct Snapshot {
  std::vector<std::vector<double>> values;
};

Snapshot snapshot(const Network& net) {
  Snapshot s;
  for (const Parameter* p : net.parameters()) s.values.push_back(p->value.data);
  return s;
}

void restore(Network& net, const Snapshot& s) {
  auto ps = net.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data = s.values[i];
}

}  // namespace

double evaluate_loss(const TrainedModel& model, const std::vector<LabeledCube>& set, double* accuracy) {
  if (set.empty()) {
    if (accuracy) *accuracy = 0.0;
    return 0.0;
  }
  double total = 0.0;
  std::size_t correct = 0;
  constexpr std::size_t kBatch = 32;
  for (std::size_t b = 0; b < set.size(); b += kBatch) {
    const std::size_t e = std::min(set.size(), b + kBatch);
    std::vector<const Grid3<float>*> cubes;
    std::vector<int> labels;
    for (std::size_t i = b; i < e; ++i) {
      cubes.push_back(&set[i].cube.values);
      labels.push_back(set[i].label);
    }
    const Tensor logits = model.net.infer(batch_tensor(cubes, model.input_side));
    total += loss_and_grad(logits, labels, model.spec.output_kind, nullptr) * static_cast<double>(e - b);
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < e - b; ++i) {
      const double* z = logits.ptr() + i * k;
      const int pred = model.softmax() ? static_cast<int>(std::max_element(z, z + k) - z) : (z[0] >= 0.0 ? 1 : 0);
      if (pred == labels[i]) ++correct;
    }
  }
  if (accuracy) *accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return total / static_cast<double>(set.size());
}

TrainedModel train(TrainedModel model, const std::vector<LabeledCube>& train_set,
                   const std::vector<LabeledCube>& val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  check_labels(train_set, model, "training");
  check_labels(val_set, model, "validation");
  std::set<int> present;
  for (const auto& c : train_set) present.insert(c.label);
  if (present.size() < 2) throw DataError("training set contains a single class");
  if (model.softmax() != (cfg.loss == LossKind::CategoricalCrossEntropy)) {
    throw ConfigError("loss does not match the model's output head");
  }

  Rng rng(cfg.seed);
  Network& net = model.net;
  auto params = net.parameters();
  std::vector<std::vector<double>> m1(params.size()), m2(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m1[i].assign(params[i]->value.size(), 0.0);
    m2[i].assign(params[i]->value.size(), 0.0);
  }
  long step = 0;

  // Epoch index list: (sample, copy) pairs for the replication factors.
  std::vector<std::size_t> base;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const int f = cfg.augmentation.factor_for(train_set[i].label);
    for (int r = 0; r < f; ++r) base.push_back(i);
  }
  const bool augmenting = cfg.augmentation.any();
  const std::vector<LabeledCube>& monitor = val_set.empty() ? train_set : val_set;

  double best_loss = std::numeric_limits<double>::infinity();
  Snapshot best = snapshot(net);
  int since_best = 0;
  model.training_log.clear();
  model.best_epoch = -1;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = base;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t e = std::min(order.size(), b + batch);
      std::vector<VoxelCube> augmented;
      std::vector<const Grid3<float>*> cubes;
      std::vector<int> labels;
      if (augmenting) augmented.reserve(e - b);
      for (std::size_t i = b; i < e; ++i) {
        const LabeledCube& item = train_set[order[i]];
        if (augmenting) {
          augmented.push_back(augment(item.cube, cfg.augmentation, rng));
          cubes.push_back(&augmented.back().values);
        } else {
          cubes.push_back(&item.cube.values);
        }
        labels.push_back(item.label);
      }
      net.zero_grad();
      const Tensor logits = net.forward(batch_tensor(cubes, model.input_side), true, rng);
      Tensor grad;
      const double loss = loss_and_grad(logits, labels, model.spec.output_kind, &grad);
      if (!std::isfinite(loss)) throw DivergenceError(epoch, "non-finite training loss at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(e - b);
      net.backward(grad);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        if (!p.trainable) continue;
        auto& a = m1[pi];
        auto& v = m2[pi];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
          const double g = p.grad.data[j];
          a[j] = cfg.adam_beta1 * a[j] + (1.0 - cfg.adam_beta1) * g;
          v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g * g;
          const double update = cfg.learning_rate * (a[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_epsilon);
          if (update != 0.0) p.value.data[j] -= update;
        }
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(order.size());
    log.val_loss = evaluate_loss(model, monitor, &log.val_accuracy);
    if (!std::isfinite(log.val_loss)) throw DivergenceError(epoch, "non-finite validation loss at epoch " + std::to_string(epoch));
    model.training_log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_loss < best_loss) {
      best_loss = log.val_loss;
      best = snapshot(net);
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  restore(net, best);
  return model;
}

}  // namespace lungpipe::nn
