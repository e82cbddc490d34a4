#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "lungpipe/grid.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe::fixtures {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lungpipe_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline CtVolume constant_volume(Shape3 s, float value, Vec3 spacing = {1, 1, 1}) {
  CtVolume v;
  v.voxels = Grid3<float>(s, value);
  v.spacing = spacing;
  v.scan_id = "test";
  return v;
}

/// Normalized volume holding one bright sphere on a flat background.
inline CtVolume sphere_volume(Shape3 s, Vec3 center, double radius, float inside, float outside,
                              double noise = 0.0, std::uint64_t seed = 0) {
  CtVolume v = constant_volume(s, outside);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      for (std::int64_t x = 0; x < s.x; ++x) {
        const double d = (Vec3{double(z), double(y), double(x)} - center).norm();
        double val = d <= radius ? inside : outside;
        if (noise > 0) val += noise * n(rng);
        v.voxels(z, y, x) = static_cast<float>(val);
      }
  return v;
}

inline double dice(const Grid3<std::uint8_t>& a, const Grid3<std::uint8_t>& b) {
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.storage()[i] != 0, y = b.storage()[i] != 0;
    inter += x && y;
    na += x;
    nb += y;
  }
  return na + nb == 0 ? 1.0 : 2.0 * double(inter) / double(na + nb);
}

}  // namespace lungpipe::fixtures
