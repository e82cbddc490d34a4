#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "lungpipe/error.hpp"
#include "lungpipe/metaimage.hpp"
#include "lungpipe/phantom.hpp"
#include "lungpipe/volume.hpp"
#include "support.hpp"

using namespace lungpipe;
using lungpipe::fixtures::constant_volume;
using lungpipe::fixtures::temp_dir;

TEST(ClipAndNormalize, Examples) {
  CtVolume v = constant_volume({1, 1, 3}, 0.0f);
  v.voxels(0, 0, 0) = 1500.0f;
  v.voxels(0, 0, 1) = -1000.0f;
  v.voxels(0, 0, 2) = 40.0f;
  const CtVolume n = clip_and_normalize(v);
  EXPECT_FLOAT_EQ(n.voxels(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(n.voxels(0, 0, 1), 0.0f);
  EXPECT_NEAR(n.voxels(0, 0, 2), 1040.0 / 1400.0, 1e-6);
}

TEST(ClipAndNormalize, RejectsEmptyWindow) {
  const CtVolume v = constant_volume({2, 2, 2}, 0.0f);
  EXPECT_THROW(clip_and_normalize(v, 400, 400), ConfigError);
  EXPECT_THROW(clip_and_normalize(v, 500, -100), ConfigError);
}

TEST(ClipAndNormalize, IdempotentOnUnitWindow) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-2000.f, 2000.f);
  CtVolume v = constant_volume({4, 5, 6}, 0.0f);
  for (auto& x : v.voxels.values()) x = u(rng);
  const CtVolume once = clip_and_normalize(v);
  const CtVolume twice = clip_and_normalize(once, 0.0, 1.0);
  for (std::size_t i = 0; i < once.voxels.size(); ++i) {
    EXPECT_GE(once.voxels.storage()[i], 0.0f);
    EXPECT_LE(once.voxels.storage()[i], 1.0f);
    EXPECT_NEAR(once.voxels.storage()[i], twice.voxels.storage()[i], 1e-6);
  }
}

TEST(Resample, ShapeRounding) {
  EXPECT_EQ(resampled_shape({120, 512, 512}, {2.5, 0.7, 0.7}, {1, 1, 1}), (Shape3{300, 358, 358}));
  // 5 * 0.5 = 2.5 rounds half away from zero.
  EXPECT_EQ(resampled_shape({5, 5, 5}, {0.5, 0.5, 0.5}, {1, 1, 1}), (Shape3{3, 3, 3}));
}

TEST(Resample, IdentityAtUnitSpacing) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.f, 100.f);
  CtVolume v = constant_volume({7, 8, 9}, 0.0f);
  for (auto& x : v.voxels.values()) x = n(rng);
  const CtVolume r = resample_isotropic(v);
  ASSERT_EQ(r.shape(), v.shape());
  for (std::size_t i = 0; i < v.voxels.size(); ++i) EXPECT_NEAR(r.voxels.storage()[i], v.voxels.storage()[i], 1e-9);
}

TEST(Resample, ConstantPreservedAndConserved) {
  const CtVolume v = constant_volume({10, 20, 20}, 123.0f, {2.5, 0.7, 0.7});
  const CtVolume r = resample_isotropic(v);
  EXPECT_EQ(r.shape(), (Shape3{25, 14, 14}));
  EXPECT_EQ(r.spacing, (Vec3{1, 1, 1}));
  EXPECT_EQ(r.origin, v.origin);
  double sum = 0;
  for (float x : r.voxels.values()) {
    EXPECT_FLOAT_EQ(x, 123.0f);
    sum += x;
  }
  const auto& s = r.shape();
  EXPECT_DOUBLE_EQ(sum, 123.0 * double(s.z * s.y * s.x));
}

TEST(Resample, SmoothPhantomIntensityWithinOnePercent) {
  // Smooth Gaussian bump; total intensity times voxel volume is conserved.
  const Vec3 sp{2.0, 0.8, 0.8};
  CtVolume v = constant_volume({40, 100, 100}, 0.0f, sp);
  const Vec3 c{40.0, 40.0, 40.0};
  for (std::int64_t z = 0; z < 40; ++z)
    for (std::int64_t y = 0; y < 100; ++y)
      for (std::int64_t x = 0; x < 100; ++x) {
        const Vec3 w = v.world_of({z, y, x});
        v.voxels(z, y, x) = static_cast<float>(std::exp(-std::pow((w - c).norm(), 2) / (2 * 64.0)));
      }
  const CtVolume r = resample_isotropic(v);
  double s_in = 0, s_out = 0;
  for (float x : v.voxels.values()) s_in += x;
  for (float x : r.voxels.values()) s_out += x;
  s_in *= sp.z * sp.y * sp.x;
  EXPECT_NEAR(s_out / s_in, 1.0, 0.01);
}

TEST(Resample, TrilinearReproducesLinearField) {
  CtVolume v = constant_volume({6, 6, 6}, 0.0f, {2, 2, 2});
  for (std::int64_t z = 0; z < 6; ++z)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 6; ++x) v.voxels(z, y, x) = float(3 * z * 2 + 2 * y * 2 - x * 2);
  const CtVolume r = resample_isotropic(v);
  for (std::int64_t z = 0; z < 11; ++z)
    for (std::int64_t y = 0; y < 11; ++y)
      for (std::int64_t x = 0; x < 11; ++x) EXPECT_NEAR(r.voxels(z, y, x), 3 * z + 2 * y - x, 1e-4);
}

TEST(Resample, Errors) {
  const CtVolume v = constant_volume({1, 1, 1}, 0.0f, {0.1, 0.1, 0.1});
  EXPECT_THROW(resample_isotropic(v), ResampleError);
  EXPECT_THROW(resample_isotropic(v, {0, 1, 1}), ConfigError);
}

TEST(WorldCoordinates, RoundTrip) {
  CtVolume v = constant_volume({5, 6, 7}, 0.0f, {2.5, 0.7, 0.65});
  v.origin = {-100.25, 33.0, -7.5};
  for (std::int64_t z = 0; z < 5; ++z)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 7; ++x) EXPECT_EQ(v.nearest_index(v.world_of({z, y, x})), (Index3{z, y, x}));
}

TEST(ExtractCube, UniformCentre) {
  const CtVolume v = constant_volume({100, 100, 100}, 0.5f);
  const VoxelCube c = extract_cube(v, {50, 50, 50});
  ASSERT_EQ(c.values.shape(), (Shape3{32, 32, 32}));
  for (float x : c.values.values()) EXPECT_FLOAT_EQ(x, 0.5f);
}

TEST(ExtractCube, CornerHasOneOctant) {
  const CtVolume v = constant_volume({40, 40, 40}, 1.0f);
  const VoxelCube c = extract_cube(v, {0, 0, 0});
  std::size_t inside = 0;
  for (float x : c.values.values()) {
    EXPECT_TRUE(x == 0.0f || x == 1.0f);
    inside += x == 1.0f;
  }
  EXPECT_EQ(inside, 32u * 32u * 32u / 8u);
}

TEST(ExtractCube, BoundsAndSpacing) {
  const CtVolume v = constant_volume({40, 40, 40}, 1.0f);
  EXPECT_NO_THROW(extract_cube(v, {-16, 20, 20}));
  EXPECT_THROW(extract_cube(v, {-16.5, 20, 20}), OutOfBounds);
  EXPECT_THROW(extract_cube(v, {20, 20, 55.6}), OutOfBounds);
  const CtVolume aniso = constant_volume({40, 40, 40}, 1.0f, {2, 1, 1});
  EXPECT_THROW(extract_cube(aniso, {20, 20, 20}), ConfigError);
}

TEST(ExtractCube, SphereMeanMatchesVolumeFraction) {
  // 8 mm sphere (value 1) on 0.2 background; fraction of the 32^3 cube inside the sphere.
  const double r = 8.0;
  const CtVolume v = lungpipe::fixtures::sphere_volume({64, 64, 64}, {32, 32, 32}, r, 1.0f, 0.2f);
  const VoxelCube c = extract_cube(v, {32, 32, 32});
  double mean = 0;
  for (float x : c.values.values()) mean += x;
  mean /= double(c.values.size());
  const double frac = 4.0 / 3.0 * M_PI * r * r * r / 32768.0;
  EXPECT_NEAR(mean, 0.2 + 0.8 * frac, 0.02);
}

TEST(ExtractCube, ValuesAlwaysInUnitRange) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-0.5f, 1.5f);
  CtVolume v = constant_volume({20, 20, 20}, 0.0f);
  for (auto& x : v.voxels.values()) x = u(rng);
  for (const Vec3 c : {Vec3{0, 0, 0}, Vec3{10, 10, 10}, Vec3{19, 3, 30}}) {
    for (float x : extract_cube(v, c).values.values()) {
      EXPECT_GE(x, 0.0f);
      EXPECT_LE(x, 1.0f);
    }
  }
}

TEST(MetaImage, TinyHeaderAndPayload) {
  const auto dir = temp_dir("meta_tiny");
  {
    std::ofstream h(dir / "t.mhd");
    h << "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
         "ElementType = MET_SHORT\nElementDataFile = t.raw\n";
    std::ofstream r(dir / "t.raw", std::ios::binary);
    for (std::int16_t i = 0; i < 8; ++i) r.write(reinterpret_cast<const char*>(&i), 2);
  }
  const CtVolume v = load_volume(dir / "t.mhd");
  EXPECT_EQ(v.shape(), (Shape3{2, 2, 2}));
  // x varies fastest on disk.
  EXPECT_FLOAT_EQ(v.voxels(0, 0, 1), 1.0f);
  EXPECT_FLOAT_EQ(v.voxels(0, 1, 0), 2.0f);
  EXPECT_FLOAT_EQ(v.voxels(1, 0, 0), 4.0f);
}

TEST(MetaImage, AnisotropicGeometryOrder) {
  const auto dir = temp_dir("meta_geo");
  {
    std::ofstream h(dir / "g.mhd");
    h << "NDims = 3\nDimSize = 4 3 2\nElementSpacing = 0.7 0.8 2.5\nOffset = -10 -20 -30\n"
         "ElementType = MET_UCHAR\nElementDataFile = g.raw\n";
    std::ofstream r(dir / "g.raw", std::ios::binary);
    for (int i = 0; i < 24; ++i) r.put(static_cast<char>(i));
  }
  const CtVolume v = load_volume(dir / "g.mhd");
  EXPECT_EQ(v.shape(), (Shape3{2, 3, 4}));
  EXPECT_EQ(v.spacing, (Vec3{2.5, 0.8, 0.7}));
  EXPECT_EQ(v.origin, (Vec3{-30, -20, -10}));
}

TEST(MetaImage, Errors) {
  const auto dir = temp_dir("meta_err");
  {
    std::ofstream h(dir / "four.mhd");
    h << "NDims = 4\nDimSize = 2 2 2 2\nElementSpacing = 1 1 1 1\nOffset = 0 0 0 0\nElementType = MET_SHORT\n"
         "ElementDataFile = four.raw\n";
    std::ofstream s(dir / "short.mhd");
    s << "NDims = 3\nDimSize = 2 2 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\nElementType = MET_SHORT\n"
         "ElementDataFile = short.raw\n";
    std::ofstream r(dir / "short.raw", std::ios::binary);
    r.write("abc", 3);
    std::ofstream m(dir / "missing.mhd");
    m << "NDims = 3\nDimSize = 2 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\nElementType = MET_SHORT\n"
         "ElementDataFile = short.raw\n";
  }
  EXPECT_THROW(load_volume(dir / "four.mhd"), FormatError);
  EXPECT_THROW(load_volume(dir / "short.mhd"), CorruptData);
  EXPECT_THROW(load_volume(dir / "missing.mhd"), FormatError);
  EXPECT_THROW(load_volume(dir / "absent.mhd"), IoError);
}

TEST(MetaImage, PhantomRoundTripBitIdentical) {
  PhantomSpec spec = random_phantom_spec({}, 5, "rt");
  const PhantomScan scan = generate_ct(spec, 5);
  const auto dir = temp_dir("meta_rt");
  save_volume(scan.volume, dir / "rt.mhd");
  const CtVolume back = load_volume(dir / "rt.mhd");
  EXPECT_EQ(back.voxels, scan.volume.voxels);
  EXPECT_EQ(back.spacing, scan.volume.spacing);
  EXPECT_EQ(back.origin, scan.volume.origin);
}
