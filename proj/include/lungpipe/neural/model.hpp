#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "lungpipe/neural/layers.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe::nn {

enum class ArchKind { Shallow, Deeper, Residual };
enum class OutputKind { Softmax, Sigmoid };

std::string to_string(ArchKind k);
ArchKind parse_arch_kind(const std::string& s);

struct ArchitectureSpec {
  ArchKind kind = ArchKind::Shallow;
  /// Shallow/deeper: the three block widths. Residual: one width per stage.
  std::vector<int> conv_filters{32, 64, 128};
  int kernel = 3;
  int pool = 2;
  double dropout_inner = 0.25;
  double dropout_final = 0.5;
  bool use_batchnorm = false;
  /// Residual only: stem/transition convs + 2 per block + the output dense.
  int residual_depth = 10;
  int n_outputs = 3;
  OutputKind output_kind = OutputKind::Softmax;
  /// Width of the hidden dense layer (the penultimate layer) of shallow/deeper nets.
  int dense_units = 64;

  /// Throws ArchError.
  void validate() const;

  static ArchitectureSpec shallow();
  static ArchitectureSpec deeper();
  static ArchitectureSpec residual(int depth = 10);
};

void to_json(nlohmann::json& j, const ArchitectureSpec& s);
void from_json(const nlohmann::json& j, ArchitectureSpec& s);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainedModel {
  ArchitectureSpec spec;
  int input_side = kCubeSide;
  Network net;
  std::vector<std::string> class_order;
  std::vector<EpochLog> training_log;
  int best_epoch = -1;
  std::uint64_t seed = 0;

  std::size_t parameter_count(bool trainable_only = false) const;
  /// Layers run to obtain the penultimate activation (all but the output dense).
  std::size_t penultimate_depth() const { return net.size() - 1; }
  std::size_t penultimate_width() const;
  bool softmax() const { return spec.output_kind == OutputKind::Softmax; }
};

/// Randomly initialized network (Glorot uniform, zero biases) for `spec`.
/// `class_order` defaults to "0".."n-1" (softmax) or {"positive"} (sigmoid).
TrainedModel build_model(const ArchitectureSpec& spec, int input_side = kCubeSide, std::uint64_t seed = 0,
                         std::vector<std::string> class_order = {});

/// Stack cubes into an (N,1,S,S,S) tensor. Throws ArchError on a side mismatch.
Tensor cubes_to_tensor(const std::vector<const Grid3<float>*>& cubes, int side);

/// Softmax (or sigmoid) of raw network outputs, one row per item.
std::vector<std::vector<double>> activate(const Tensor& logits, OutputKind kind);

std::vector<double> predict_proba(const TrainedModel& m, const VoxelCube& cube);
std::vector<std::vector<double>> predict_proba(const TrainedModel& m, const std::vector<const Grid3<float>*>& cubes);

/// Penultimate-layer activations (inference mode).
std::vector<double> penultimate(const TrainedModel& m, const VoxelCube& cube);
std::vector<std::vector<double>> penultimate(const TrainedModel& m, const std::vector<const Grid3<float>*>& cubes);

/// FNV-1a over all parameter names and values.
std::uint64_t weights_hash(const TrainedModel& m);

}  // namespace lungpipe::nn
