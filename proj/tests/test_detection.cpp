#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <random>

#include "lungpipe/detection.hpp"
#include "lungpipe/error.hpp"
#include "support.hpp"

using namespace lungpipe;
using lungpipe::fixtures::constant_volume;
using lungpipe::fixtures::sphere_volume;

namespace {

LungMask full_mask(const CtVolume& v) {
  LungMask m;
  m.mask = Grid3<std::uint8_t>(v.shape(), 1);
  m.spacing = v.spacing;
  m.origin = v.origin;
  return m;
}

DogConfig small_cfg() { return {4.0, 24.0, 5, 0.05, 0.9}; }

}  // namespace

TEST(DogSigmas, DefaultLevels) {
  const auto s = dog_sigmas(DogConfig::option3());
  ASSERT_EQ(s.size(), 6u);
  EXPECT_NEAR(s[0], 5.0 / (2.0 * std::sqrt(3.0)), 1e-12);
  EXPECT_NEAR(s[0], 1.443, 5e-4);
  EXPECT_NEAR(s[4], 60.0 / (2.0 * std::sqrt(3.0)), 1e-12);
  EXPECT_NEAR(s[5] - s[4], s[1] - s[0], 1e-12);
}

TEST(DogConfig, Validation) {
  DogConfig c;
  c.d_min = 60.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DogConfig{};
  c.steps = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DogConfig{};
  c.overlap = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(DogConfig::option1().validate());
  EXPECT_NO_THROW(DogConfig::option2().validate());
}

TEST(ScaleSpace, UniformVolumeGivesZeroResponse) {
  const CtVolume v = constant_volume({30, 30, 30}, 0.37f);
  const auto space = build_scale_space(v, small_cfg());
  ASSERT_EQ(space.levels.size(), 5u);
  for (const auto& l : space.levels)
    for (float x : l.response.values()) EXPECT_NEAR(x, 0.0f, 1e-5f);
}

TEST(ScaleSpace, TooSmallVolume) {
  EXPECT_THROW(build_scale_space(constant_volume({20, 80, 80}, 0.1f), DogConfig::option3()), VolumeTooSmall);
}

namespace {

struct BlobPeak {
  std::size_t measured = 0, analytic = 0, nearest = 0;
};

BlobPeak blob_peak(const DogConfig& cfg, double sb, std::int64_t n) {
  const auto sig = dog_sigmas(cfg);
  const std::int64_t c = n / 2;
  CtVolume v = constant_volume({n, n, n}, 0.0f);
  for (std::int64_t z = 0; z < n; ++z)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x) {
        const double r2 = double((z - c) * (z - c) + (y - c) * (y - c) + (x - c) * (x - c));
        v.voxels(z, y, x) = float(std::exp(-r2 / (2 * sb * sb)));
      }
  // Continuous response at the blob centre: sigma_k * (A(sigma_k) - A(sigma_k+1)),
  // A(s) = (sb^2 / (sb^2 + s^2))^(3/2).
  auto amp = [&](double s) { return std::pow(sb * sb / (sb * sb + s * s), 1.5); };
  BlobPeak p;
  double best = -1;
  for (std::size_t k = 0; k + 1 < sig.size(); ++k) {
    const double r = sig[k] * (amp(sig[k]) - amp(sig[k + 1]));
    if (r > best) best = r, p.analytic = k;
    if (std::abs(sig[k] - sb) < std::abs(sig[p.nearest] - sb)) p.nearest = k;
  }
  const auto space = build_scale_space(v, cfg);
  for (std::size_t k = 0; k < space.levels.size(); ++k)
    if (space.levels[k].response(c, c, c) > space.levels[p.measured].response(c, c, c)) p.measured = k;
  return p;
}

}  // namespace

TEST(ScaleSpace, GaussianBlobPeaksAtAnalyticLevel) {
  const DogConfig cfg = small_cfg();
  const auto sig = dog_sigmas(cfg);
  for (double sb : {sig[1], sig[2], sig[3], 0.5 * (sig[2] + sig[3])}) {
    const BlobPeak p = blob_peak(cfg, sb, 48);
    EXPECT_EQ(p.measured, p.analytic) << "sigma_b " << sb;
  }
}

TEST(ScaleSpace, DefaultLevelsPeakAtAnalyticLevel) {
  const DogConfig cfg = DogConfig::option3();
  const auto sig = dog_sigmas(cfg);
  for (double sb : {sig[1], sig[2], 0.5 * (sig[1] + sig[2])}) {
    const BlobPeak p = blob_peak(cfg, sb, 72);
    EXPECT_EQ(p.measured, p.analytic) << "sigma_b " << sb;
    EXPECT_LE(sig[p.measured], sb);
  }
}

TEST(Detect, EmptyMaskGivesNothing) {
  const CtVolume v = sphere_volume({72, 72, 72}, {36, 36, 36}, 8, 0.5f, 0.2f, 0.0f, 1);
  LungMask m = full_mask(v);
  std::fill(m.mask.values().begin(), m.mask.values().end(), std::uint8_t{0});
  EXPECT_TRUE(detect_candidates(v, m, DogConfig::option3()).empty());
}

TEST(Detect, SingleSphereFoundOnce) {
  const Vec3 c{36.3, 35.6, 36.0};
  const CtVolume v = sphere_volume({72, 72, 72}, c, 8.0, 0.5f, 0.2f, 0.02f, 5);
  const auto cands = detect_candidates(v, full_mask(v), DogConfig::option3());
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_LE((cands[0].center_world - c).norm(), 2.0);
  EXPECT_NEAR(cands[0].radius, 8.0, 2.0);
}

TEST(Detect, NearCoincidentSpheresGiveOneCandidate) {
  CtVolume v = constant_volume({72, 72, 72}, 0.2f);
  for (std::int64_t z = 0; z < 72; ++z)
    for (std::int64_t y = 0; y < 72; ++y)
      for (std::int64_t x = 0; x < 72; ++x) {
        const Vec3 p{double(z), double(y), double(x)};
        if ((p - Vec3{36, 36, 35.5}).norm() <= 8 || (p - Vec3{36, 36, 36.5}).norm() <= 8) v.voxels(z, y, x) = 0.5f;
      }
  ASSERT_GT(sphere_overlap(8, 8, 1.0), 0.9);
  EXPECT_EQ(detect_candidates(v, full_mask(v), DogConfig::option3()).size(), 1u);
}

TEST(Detect, TranslationEquivariance) {
  const DogConfig cfg = small_cfg();
  const CtVolume a = sphere_volume({40, 40, 40}, {18, 19, 20}, 4.0, 0.6f, 0.1f, 0.0f, 1);
  const CtVolume b = sphere_volume({40, 40, 40}, {21, 17, 22}, 4.0, 0.6f, 0.1f, 0.0f, 1);
  const auto ca = detect_candidates(a, full_mask(a), cfg);
  const auto cb = detect_candidates(b, full_mask(b), cfg);
  ASSERT_EQ(ca.size(), 1u);
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_EQ((cb[0].center_world - ca[0].center_world), (Vec3{3, -2, 2}));
  EXPECT_NEAR(ca[0].radius, cb[0].radius, 1e-6);
}

TEST(Detect, RaisingThresholdOnlyRemovesPeaks) {
  std::mt19937_64 rng(3);
  CtVolume v = constant_volume({36, 36, 36}, 0.2f);
  std::normal_distribution<float> n(0.0f, 0.1f);
  for (auto& x : v.voxels.values()) x += n(rng);
  DogConfig lo = small_cfg(), hi = small_cfg();
  lo.threshold = 0.02;
  hi.threshold = 0.05;
  const LungMask m = full_mask(v);
  const auto space = build_scale_space(v, lo);
  const auto a = find_peaks(space, v, m, lo);
  const auto b = find_peaks(space, v, m, hi);
  EXPECT_LE(b.size(), a.size());
  for (const auto& p : b) {
    const bool found = std::any_of(a.begin(), a.end(), [&](const NoduleCandidate& q) {
      return q.center_index == p.center_index && q.level == p.level;
    });
    EXPECT_TRUE(found);
  }
}

TEST(Prune, SurvivorsRespectOverlapBound) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(0, 20), rad(1, 6), resp(0, 1);
  std::vector<NoduleCandidate> cands(200);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    auto& c = cands[i];
    c.center_world = {pos(rng), pos(rng), pos(rng)};
    c.center_index = {std::int64_t(i), 0, 0};
    c.radius = rad(rng);
    c.response = resp(rng);
  }
  const auto kept = prune_overlapping(cands, 0.5);
  ASSERT_FALSE(kept.empty());
  EXPECT_EQ(kept.front().response, std::max_element(cands.begin(), cands.end(), [](auto& a, auto& b) {
                                     return a.response < b.response;
                                   })->response);
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::size_t j = i + 1; j < kept.size(); ++j)
      EXPECT_LE(sphere_overlap(kept[i].radius, kept[j].radius, (kept[i].center_world - kept[j].center_world).norm()), 0.5);
  // Every dropped candidate clashes with a stronger survivor.
  for (const auto& c : cands) {
    const bool survived = std::any_of(kept.begin(), kept.end(), [&](auto& k) { return k.center_index == c.center_index; });
    if (survived) continue;
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](auto& k) {
      return k.response >= c.response && sphere_overlap(c.radius, k.radius, (c.center_world - k.center_world).norm()) > 0.5;
    });
    EXPECT_TRUE(clash);
  }
}

TEST(SphereOverlap, MatchesNumericalIntegration) {
  const double h = 0.1;
  for (auto [r1, r2, d] : {std::tuple{3.0, 2.0, 2.5}, std::tuple{2.0, 2.0, 1.0}, std::tuple{4.0, 1.5, 3.9}}) {
    std::size_t inter = 0;
    const double rs = std::min(r1, r2);
    for (double z = -rs; z <= rs; z += h)
      for (double y = -rs; y <= rs; y += h)
        for (double x = -rs; x <= rs; x += h) {
          // Small sphere at the origin, large one at distance d on x.
          const double ra = r1 < r2 ? r1 : r2, rb = r1 < r2 ? r2 : r1;
          if (x * x + y * y + z * z <= ra * ra && (x - d) * (x - d) + y * y + z * z <= rb * rb) ++inter;
        }
    const double frac = double(inter) * h * h * h / (4.0 / 3.0 * M_PI * rs * rs * rs);
    EXPECT_NEAR(sphere_overlap(r1, r2, d), frac, 0.02);
  }
  EXPECT_EQ(sphere_overlap(1, 1, 3), 0.0);
  EXPECT_EQ(sphere_overlap(1, 3, 0.5), 1.0);
}

TEST(CandidateFeatures, ConstantSpherePower) {
  CtVolume v = constant_volume({30, 30, 30}, 1.0f);
  const LungMask m = full_mask(v);
  NoduleCandidate c;
  c.center_index = {15, 15, 15};
  c.center_world = v.world_of(c.center_index);
  c.radius = 5;
  EXPECT_DOUBLE_EQ(candidate_features(c, v, m).power, 1.0);
  c.center_index = {0, 15, 15};
  c.center_world = v.world_of(c.center_index);
  EXPECT_DOUBLE_EQ(candidate_features(c, v, m).relative_z, 0.0);
  c.center_index = {29, 15, 15};
  EXPECT_DOUBLE_EQ(candidate_features(c, v, m).relative_z, 1.0);
}

TEST(CandidateFeatures, PowerMatchesVolumeFraction) {
  const double r = 6.0, rc = 7.5;
  const CtVolume v = sphere_volume({40, 40, 40}, {20, 20, 20}, r, 0.75f, 0.1f, 0.0f, 1);
  NoduleCandidate c;
  c.center_index = {20, 20, 20};
  c.center_world = v.world_of(c.center_index);
  c.radius = rc;
  const double f = std::pow(r / rc, 3.0);
  EXPECT_NEAR(candidate_features(c, v, full_mask(v)).power, f * 0.75 + (1 - f) * 0.1, 0.05);
}
