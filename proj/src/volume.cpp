#include "lungpipe/volume.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lungpipe/error.hpp"

namespace lungpipe {

Index3 CtVolume::nearest_index(const Vec3& world) const {
  const Vec3 c = continuous_index(world);
  return {std::llround(c.z), std::llround(c.y), std::llround(c.x)};
}

void CtVolume::validate() const {
  if (!(spacing.z > 0.0 && spacing.y > 0.0 && spacing.x > 0.0)) {
    throw ConfigError("volume spacing must be strictly positive on every axis");
  }
  const Shape3& s = voxels.shape();
  if (s.z <= 0 || s.y <= 0 || s.x <= 0) {
    throw ConfigError("volume grid must be non-empty on every axis");
  }
}

CtVolume clip_and_normalize(const CtVolume& v, double lo, double hi) {
  if (!(lo < hi)) {
    throw ConfigError("clip window requires lo < hi (got lo=" + std::to_string(lo) +
                      ", hi=" + std::to_string(hi) + ")");
  }
  CtVolume out{Grid3<float>(v.shape()), v.spacing, v.origin, v.scan_id};
  const double range = hi - lo;
  auto src = v.voxels.values();
  auto dst = out.voxels.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = std::clamp(static_cast<double>(src[i]), lo, hi);
    dst[i] = static_cast<float>((x - lo) / range);
  }
  return out;
}

Shape3 resampled_shape(const Shape3& shape, const Vec3& spacing, const Vec3& target) {
  return {std::llround(static_cast<double>(shape.z) * spacing.z / target.z),
          std::llround(static_cast<double>(shape.y) * spacing.y / target.y),
          std::llround(static_cast<double>(shape.x) * spacing.x / target.x)};
}

namespace {

struct AxisSamples {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
  std::vector<double> frac;
};

AxisSamples axis_samples(std::int64_t out_n, std::int64_t in_n, double ratio) {
  AxisSamples a;
  a.lo.resize(static_cast<std::size_t>(out_n));
  a.hi.resize(static_cast<std::size_t>(out_n));
  a.frac.resize(static_cast<std::size_t>(out_n));
  const double last = static_cast<double>(in_n - 1);
  for (std::int64_t i = 0; i < out_n; ++i) {
    const double src = std::clamp(static_cast<double>(i) * ratio, 0.0, last);
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    const auto k = static_cast<std::size_t>(i);
    a.lo[k] = i0;
    a.hi[k] = std::min(i0 + 1, in_n - 1);
    a.frac[k] = src - static_cast<double>(i0);
  }
  return a;
}

}  // namespace

CtVolume resample_isotropic(const CtVolume& v, Vec3 target) {
  if (!(target.z > 0.0 && target.y > 0.0 && target.x > 0.0)) {
    throw ConfigError("resampling target spacing must be strictly positive");
  }
  v.validate();
  const Shape3 in = v.shape();
  const Shape3 out_shape = resampled_shape(in, v.spacing, target);
  if (out_shape.z <= 0 || out_shape.y <= 0 || out_shape.x <= 0) {
    throw ResampleError("resampling to the requested spacing yields a degenerate shape");
  }

  const AxisSamples az = axis_samples(out_shape.z, in.z, target.z / v.spacing.z);
  const AxisSamples ay = axis_samples(out_shape.y, in.y, target.y / v.spacing.y);
  const AxisSamples ax = axis_samples(out_shape.x, in.x, target.x / v.spacing.x);

  CtVolume out{Grid3<float>(out_shape), target, v.origin, v.scan_id};
  const auto& src = v.voxels;
  for (std::int64_t z = 0; z < out_shape.z; ++z) {
    const auto kz = static_cast<std::size_t>(z);
    const double fz = az.frac[kz];
    for (std::int64_t y = 0; y < out_shape.y; ++y) {
      const auto ky = static_cast<std::size_t>(y);
      const double fy = ay.frac[ky];
      for (std::int64_t x = 0; x < out_shape.x; ++x) {
        const auto kx = static_cast<std::size_t>(x);
        const double fx = ax.frac[kx];
        const std::int64_t z0 = az.lo[kz], z1 = az.hi[kz];
        const std::int64_t y0 = ay.lo[ky], y1 = ay.hi[ky];
        const std::int64_t x0 = ax.lo[kx], x1 = ax.hi[kx];
        const double c00 = src(z0, y0, x0) * (1.0 - fx) + src(z0, y0, x1) * fx;
        const double c01 = src(z0, y1, x0) * (1.0 - fx) + src(z0, y1, x1) * fx;
        const double c10 = src(z1, y0, x0) * (1.0 - fx) + src(z1, y0, x1) * fx;
        const double c11 = src(z1, y1, x0) * (1.0 - fx) + src(z1, y1, x1) * fx;
        const double c0 = c00 * (1.0 - fy) + c01 * fy;
        const double c1 = c10 * (1.0 - fy) + c11 * fy;
        out.voxels(z, y, x) = static_cast<float>(c0 * (1.0 - fz) + c1 * fz);
      }
    }
  }
  return out;
}

VoxelCube extract_cube(const CtVolume& v, const Vec3& center_world) {
  v.validate();
  constexpr double kIsoTolerance = 1e-3;
  if (std::abs(v.spacing.z - 1.0) > kIsoTolerance || std::abs(v.spacing.y - 1.0) > kIsoTolerance ||
      std::abs(v.spacing.x - 1.0) > kIsoTolerance) {
    throw ConfigError("cube extraction requires a 1 mm isotropic volume");
  }
  constexpr int kHalf = kCubeSide / 2;
  const Shape3& s = v.shape();
  const Vec3 c = v.continuous_index(center_world);
  auto outside = [](double ci, std::int64_t n) {
    return ci < -static_cast<double>(kHalf) || ci > static_cast<double>(n - 1 + kHalf);
  };
  if (outside(c.z, s.z) || outside(c.y, s.y) || outside(c.x, s.x)) {
    throw OutOfBounds("cube centre lies more than 16 mm outside the volume");
  }
  const Index3 ci = v.nearest_index(center_world);
  VoxelCube cube{Grid3<float>({kCubeSide, kCubeSide, kCubeSide}, 0.0f), center_world, v.scan_id};
  for (int dz = 0; dz < kCubeSide; ++dz) {
    const std::int64_t z = ci.z - kHalf + dz;
    if (z < 0 || z >= s.z) continue;
    for (int dy = 0; dy < kCubeSide; ++dy) {
      const std::int64_t y = ci.y - kHalf + dy;
      if (y < 0 || y >= s.y) continue;
      for (int dx = 0; dx < kCubeSide; ++dx) {
        const std::int64_t x = ci.x - kHalf + dx;
        if (x < 0 || x >= s.x) continue;
        cube.values(dz, dy, dx) = std::clamp(v.voxels(z, y, x), 0.0f, 1.0f);
      }
    }
  }
  return cube;
}

}  // namespace lungpipe
