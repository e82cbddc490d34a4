#include <gtest/gtest.h>

#include <random>

#include "lungpipe/error.hpp"
#include "lungpipe/phantom.hpp"
#include "lungpipe/segmentation.hpp"
#include "support.hpp"

using namespace lungpipe;
using lungpipe::fixtures::constant_volume;
using lungpipe::fixtures::dice;

namespace {

/// Brute-force dilation: voxel set if any ball offset lands on a set voxel.
Grid3<std::uint8_t> brute_dilate(const Grid3<std::uint8_t>& m, int r) {
  const Shape3 s = m.shape();
  Grid3<std::uint8_t> out(s, 0);
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      for (std::int64_t x = 0; x < s.x; ++x) {
        bool hit = false;
        for (int dz = -r; dz <= r && !hit; ++dz)
          for (int dy = -r; dy <= r && !hit; ++dy)
            for (int dx = -r; dx <= r && !hit; ++dx) {
              if (dz * dz + dy * dy + dx * dx > r * r) continue;
              const Index3 q{z + dz, y + dy, x + dx};
              hit = s.contains(q) && m[q];
            }
        out(z, y, x) = hit;
      }
  return out;
}

CtVolume body_with_air_sphere(double radius) {
  CtVolume v = constant_volume({40, 40, 40}, -1000.0f);
  for (std::int64_t z = 2; z < 38; ++z)
    for (std::int64_t y = 2; y < 38; ++y)
      for (std::int64_t x = 2; x < 38; ++x) {
        const double d = (Vec3{double(z), double(y), double(x)} - Vec3{20, 20, 20}).norm();
        v.voxels(z, y, x) = d <= radius ? -1000.0f : 40.0f;
      }
  return v;
}

}  // namespace

TEST(Segmentation, UniformBodyHasNoLung) {
  EXPECT_THROW(segment_lungs(constant_volume({20, 20, 20}, 40.0f)), NoLungFound);
}

TEST(Segmentation, SingleAirSphereEqualsDilatedSphere) {
  const CtVolume v = body_with_air_sphere(10.0);
  const LungMask m = segment_lungs(v, {-320.0, 2});
  Grid3<std::uint8_t> sphere(v.shape(), 0);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) sphere.storage()[i] = v.voxels.storage()[i] < -320.0f;
  // The outer air touches the border; exclude it.
  for (std::int64_t z = 0; z < 40; ++z)
    for (std::int64_t y = 0; y < 40; ++y)
      for (std::int64_t x = 0; x < 40; ++x)
        if (z < 2 || y < 2 || x < 2 || z >= 38 || y >= 38 || x >= 38) sphere(z, y, x) = 0;
  const auto oracle = brute_dilate(sphere, 2);
  EXPECT_GE(dice(m.mask, oracle), 0.97);
  EXPECT_EQ(m.mask, oracle);
}

TEST(Segmentation, DilationOnlyGrows) {
  const CtVolume v = body_with_air_sphere(7.0);
  const LungMask m0 = segment_lungs(v, {-320.0, 0});
  const LungMask m2 = segment_lungs(v, {-320.0, 2});
  for (std::size_t i = 0; i < m0.mask.size(); ++i)
    if (m0.mask.storage()[i]) EXPECT_TRUE(m2.mask.storage()[i]);
  EXPECT_GT(m2.count(), m0.count());
}

TEST(Segmentation, KeepsTwoLargestInteriorComponents) {
  CtVolume v = constant_volume({30, 30, 60}, 40.0f);
  auto carve = [&](Vec3 c, double r) {
    for (std::int64_t z = 0; z < 30; ++z)
      for (std::int64_t y = 0; y < 30; ++y)
        for (std::int64_t x = 0; x < 60; ++x)
          if ((Vec3{double(z), double(y), double(x)} - c).norm() <= r) v.voxels(z, y, x) = -800.0f;
  };
  carve({15, 15, 12}, 8);
  carve({15, 15, 45}, 7);
  carve({15, 15, 29}, 2);  // small third component
  const LungMask m = segment_lungs(v, {-320.0, 0});
  EXPECT_TRUE(m.contains({15, 15, 12}));
  EXPECT_TRUE(m.contains({15, 15, 45}));
  EXPECT_FALSE(m.contains({15, 15, 29}));
}

TEST(Segmentation, BorderAirNeverKept) {
  PhantomSpec spec = random_phantom_spec({}, 11);
  const PhantomScan scan = generate_ct(spec, 11);
  const LungMask m = segment_lungs(scan.volume, {-320.0, 0});
  Grid3<std::uint8_t> air(scan.volume.shape(), 0);
  for (std::size_t i = 0; i < air.size(); ++i) air.storage()[i] = scan.volume.voxels.storage()[i] < -320.0f;
  const Components comps = label_components(air);
  for (std::size_t i = 0; i < m.mask.size(); ++i) {
    const auto id = comps.labels.storage()[i];
    if (m.mask.storage()[i] && id > 0) EXPECT_FALSE(comps.touches_border[id - 1]);
  }
}

TEST(Segmentation, InvariantToConstantOffset) {
  PhantomSpec spec = random_phantom_spec({}, 12);
  const PhantomScan scan = generate_ct(spec, 12);
  CtVolume shifted = scan.volume;
  for (auto& x : shifted.voxels.values()) x += 250.0f;
  const LungMask a = segment_lungs(scan.volume, {-320.0, 2});
  const LungMask b = segment_lungs(shifted, {-70.0, 2});
  EXPECT_EQ(a.mask, b.mask);
}

TEST(Segmentation, PhantomDiceAgainstDilatedAnalyticLungs) {
  RandomPhantomOptions opts;
  opts.shape = {60, 80, 100};
  opts.max_diameter = 16.0;
  const PhantomSpec spec = random_phantom_spec(opts, 21);
  const PhantomScan scan = generate_ct(spec, 21);
  const LungMask m = segment_lungs(scan.volume, {-320.0, 2});
  EXPECT_GE(dice(m.mask, brute_dilate(scan.lung_mask, 2)), 0.95);
}

TEST(LungZBounds, Examples) {
  LungMask m;
  m.mask = Grid3<std::uint8_t>({60, 4, 4}, 0);
  for (std::int64_t z = 10; z <= 50; ++z) m.mask(z, 1, 1) = 1;
  EXPECT_EQ(lung_z_bounds(m).z_min, 10);
  EXPECT_EQ(lung_z_bounds(m).z_max, 50);
  m.mask = Grid3<std::uint8_t>({20, 4, 4}, 0);
  m.mask(7, 2, 2) = 1;
  EXPECT_EQ(lung_z_bounds(m).z_min, 7);
  EXPECT_EQ(lung_z_bounds(m).z_max, 7);
  m.mask = Grid3<std::uint8_t>({5, 5, 5}, 0);
  EXPECT_THROW(lung_z_bounds(m), NoLungFound);
}

TEST(LungZBounds, PhantomMatchesAnalyticExtent) {
  const PhantomSpec spec = random_phantom_spec({}, 31);
  const PhantomScan scan = generate_ct(spec, 31);
  const int r = 2;
  const LungMask m = segment_lungs(scan.volume, {-320.0, r});
  const auto b = lung_z_bounds(m);
  double lo = 1e9, hi = -1e9;
  for (const auto& l : spec.lungs) {
    lo = std::min(lo, l.center.z - l.radii.z);
    hi = std::max(hi, l.center.z + l.radii.z);
  }
  EXPECT_NEAR(double(b.z_min), lo - r, 1.0 + 1e-9);
  EXPECT_NEAR(double(b.z_max), hi + r, 1.0 + 1e-9);
}

TEST(Components, TwentySixConnectivity) {
  Grid3<std::uint8_t> g({3, 3, 3}, 0);
  g(0, 0, 0) = 1;
  g(1, 1, 1) = 1;
  g(2, 2, 0) = 1;
  const Components c = label_components(g);
  ASSERT_EQ(c.sizes.size(), 1u);
  EXPECT_EQ(c.sizes[0], 3u);
}

TEST(DilateBall, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  Grid3<std::uint8_t> g({15, 16, 17}, 0);
  std::bernoulli_distribution b(0.03);
  for (auto& x : g.values()) x = b(rng);
  for (int r : {0, 1, 2, 3}) EXPECT_EQ(dilate_ball(g, r), brute_dilate(g, r)) << "radius " << r;
}

TEST(FillCavities, FillsEnclosedOnly) {
  Grid3<std::uint8_t> g({7, 7, 7}, 0);
  for (std::int64_t z = 1; z < 6; ++z)
    for (std::int64_t y = 1; y < 6; ++y)
      for (std::int64_t x = 1; x < 6; ++x) g(z, y, x) = 1;
  g(3, 3, 3) = 0;
  fill_cavities(g);
  EXPECT_EQ(g(3, 3, 3), 1);
  EXPECT_EQ(g(0, 0, 0), 0);
}
