#pragma once

#include <string>

#include "lungpipe/grid.hpp"

namespace lungpipe {

inline constexpr double kAirHu = -1000.0;
inline constexpr double kDefaultClipLo = -1000.0;
inline constexpr double kDefaultClipHi = 400.0;
inline constexpr int kCubeSide = 32;

/// CT scan: voxel intensities (HU, or [0,1] once normalized) on an
/// axis-aligned grid. World coordinate of voxel (i,j,k) is origin + (i,j,k)*spacing.
struct CtVolume {
  Grid3<float> voxels;
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::string scan_id;

  const Shape3& shape() const { return voxels.shape(); }

  Vec3 world_of(const Index3& i) const {
    return {origin.z + static_cast<double>(i.z) * spacing.z,
            origin.y + static_cast<double>(i.y) * spacing.y,
            origin.x + static_cast<double>(i.x) * spacing.x};
  }
  /// Continuous (fractional) voxel coordinate of a world point.
  Vec3 continuous_index(const Vec3& world) const {
    return {(world.z - origin.z) / spacing.z, (world.y - origin.y) / spacing.y,
            (world.x - origin.x) / spacing.x};
  }
  /// Voxel nearest to a world point (may lie outside the grid).
  Index3 nearest_index(const Vec3& world) const;

  /// Throws ConfigError when spacing is non-positive or the grid is empty.
  void validate() const;
};

/// 32^3 normalized patch centred on a nodule or candidate.
struct VoxelCube {
  Grid3<float> values;
  Vec3 center_world;
  std::string scan_id;
};

/// Training example for the cube classifiers.
struct LabeledCube {
  VoxelCube cube;
  int label = 0;  // index into the model's class order
  std::string subject_id;
};

/// Clip to [lo, hi] HU and map linearly onto [0, 1].
CtVolume clip_and_normalize(const CtVolume& v, double lo = kDefaultClipLo,
                            double hi = kDefaultClipHi);

/// Output shapes rounded half away from zero: round(n * spacing / target) per axis.
/// Trilinear interpolation, origin preserved, edge values replicated.
CtVolume resample_isotropic(const CtVolume& v, Vec3 target = {1.0, 1.0, 1.0});

Shape3 resampled_shape(const Shape3& shape, const Vec3& spacing, const Vec3& target);

/// Cut a 32^3 window around the voxel nearest `center_world`. Voxels outside
/// the volume are filled with 0 (normalized air). Requires 1 mm isotropic input.
VoxelCube extract_cube(const CtVolume& v, const Vec3& center_world);

}  // namespace lungpipe
