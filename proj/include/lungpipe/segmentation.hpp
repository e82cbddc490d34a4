#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lungpipe/grid.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe {

/// Binary lung mask aligned voxel-for-voxel with its source volume.
struct LungMask {
  Grid3<std::uint8_t> mask;
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::string scan_id;

  std::size_t count() const;
  bool contains(const Index3& i) const { return mask.shape().contains(i) && mask[i] != 0; }
};

struct SegmentationConfig {
  double threshold_hu = -320.0;
  int dilation_radius = 2;  // voxels
};

/// Threshold air (< threshold), drop 26-connected air components touching the
/// volume border, keep the two largest remaining components, fill enclosed
/// cavities and dilate with a ball of `dilation_radius` voxels.
/// Expects a resampled volume still in HU. Throws NoLungFound.
LungMask segment_lungs(const CtVolume& v, const SegmentationConfig& cfg = {});

struct ZBounds {
  std::int64_t z_min = 0;
  std::int64_t z_max = 0;
};

/// First and last axial slices containing a lung voxel. Throws NoLungFound on an empty mask.
ZBounds lung_z_bounds(const LungMask& m);

// Building blocks, exposed for testing.

struct Components {
  Grid3<std::int32_t> labels;          // 0 = background, 1..n = component id
  std::vector<std::size_t> sizes;      // sizes[id - 1]
  std::vector<bool> touches_border;    // touches_border[id - 1]
};

/// 26-connected labelling of the non-zero voxels of `binary`.
Components label_components(const Grid3<std::uint8_t>& binary);

/// Set every background voxel not 6-connected to the volume border.
void fill_cavities(Grid3<std::uint8_t>& binary);

/// Binary dilation by the digital ball {o : |o|^2 <= r^2}, via an exact
/// squared Euclidean distance transform.
Grid3<std::uint8_t> dilate_ball(const Grid3<std::uint8_t>& binary, int radius);

}  // namespace lungpipe
