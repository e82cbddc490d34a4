#pragma once

#include <random>
#include <vector>

#include "json.hpp"

#include "lungpipe/volume.hpp"

namespace lungpipe::nn {

/// In-plane (y, x) augmentation applied identically to every axial slice.
struct AugmentationConfig {
  bool rot90 = false;       // random k * 90 degree rotation
  double shear = 0.0;       // shear factor drawn from [-shear, shear]
  double zoom_range = 0.0;  // per-axis zoom drawn from [1 - z, 1 + z]
  double shift = 0.0;       // translation drawn from [-shift, shift] * side
  bool flip_h = false;      // mirror x with probability 1/2
  bool flip_v = false;      // mirror y with probability 1/2
  /// Copies of each training cube per epoch.
  int factor = 1;
  /// Optional per-class override of `factor`, indexed by label.
  std::vector<int> class_factors;

  /// Throws ConfigError on negative ranges or a factor below 1.
  void validate() const;
  bool any() const { return rot90 || flip_h || flip_v || shear > 0.0 || zoom_range > 0.0 || shift > 0.0; }
  int factor_for(int label) const;

  /// Malignancy recipe: 10 copies for every class, 25 for the highest-malignancy class.
  static AugmentationConfig malignancy();
  /// False-positive recipe: 240 copies of the positive class.
  static AugmentationConfig false_positive();
};

void to_json(nlohmann::json& j, const AugmentationConfig& a);
void from_json(const nlohmann::json& j, AugmentationConfig& a);

/// Random augmentation. Rotations and flips are exact index permutations;
/// shear/zoom/shift resample bilinearly with edge replication. Output is
/// clamped to [0, 1]; shape and scan id are preserved.
VoxelCube augment(const VoxelCube& cube, const AugmentationConfig& cfg, std::mt19937_64& rng);

/// Deterministic building blocks.
Grid3<float> rotate90(const Grid3<float>& g, int k);
Grid3<float> flip_x(const Grid3<float>& g);
Grid3<float> flip_y(const Grid3<float>& g);

}  // namespace lungpipe::nn
