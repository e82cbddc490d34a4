#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"

#include "lungpipe/neural/augment.hpp"
#include "lungpipe/neural/model.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe::nn {

enum class LossKind { CategoricalCrossEntropy, BinaryCrossEntropy };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_epochs = 150;
  int early_stop_patience = 10;
  LossKind loss = LossKind::CategoricalCrossEntropy;
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;

  /// Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Per-epoch callback (epoch log entry).
using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam with early stopping on validation loss; restores the best epoch's
/// weights. Throws DataError (one class, label out of range), ConfigError, or
/// DivergenceError (non-finite loss) with the epoch index.
TrainedModel train(TrainedModel model, const std::vector<LabeledCube>& train_set,
                   const std::vector<LabeledCube>& val_set, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Mean loss of `model` over a labeled set (inference mode).
double evaluate_loss(const TrainedModel& model, const std::vector<LabeledCube>& set, double* accuracy = nullptr);

/// Loss and logits gradient for a batch of logits.
double loss_and_grad(const Tensor& logits, const std::vector<int>& labels, OutputKind kind, Tensor* grad);

}  // namespace lungpipe::nn
