#include "lungpipe/neural/augment.hpp"

#include <algorithm>
#include <cmath>

#include "lungpipe/error.hpp"

namespace lungpipe::nn {

void AugmentationConfig::validate() const {
  if (shear < 0.0 || zoom_range < 0.0 || shift < 0.0) throw ConfigError("augmentation ranges must be non-negative");
  if (zoom_range >= 1.0) throw ConfigError("augmentation zoom_range must be below 1");
  if (factor < 1) throw ConfigError("augmentation factor must be at least 1");
  for (int f : class_factors) {
    if (f < 1) throw ConfigError("augmentation class factors must be at least 1");
  }
}

int AugmentationConfig::factor_for(int label) const {
  if (label >= 0 && static_cast<std::size_t>(label) < class_factors.size()) {
    return class_factors[static_cast<std::size_t>(label)];
  }
  return factor;
}

AugmentationConfig AugmentationConfig::malignancy() {
  AugmentationConfig a;
  a.rot90 = true;
  a.shear = 0.02;
  a.zoom_range = 0.1;
  a.shift = 0.05;
  a.flip_h = a.flip_v = true;
  a.factor = 10;
  a.class_factors = {10, 10, 25};
  return a;
}

AugmentationConfig AugmentationConfig::false_positive() {
  AugmentationConfig a;
  a.rot90 = true;
  a.shear = 0.2;
  a.zoom_range = 0.1;
  a.shift = 0.5;
  a.flip_h = a.flip_v = true;
  a.factor = 1;
  a.class_factors = {1, 240};
  return a;
}

void to_json(nlohmann::json& j, const AugmentationConfig& a) {
  j = nlohmann::json{{"rot90", a.rot90},   {"shear", a.shear},   {"zoom_range", a.zoom_range},
                     {"shift", a.shift},   {"flip_h", a.flip_h}, {"flip_v", a.flip_v},
                     {"factor", a.factor}, {"class_factors", a.class_factors}};
}

void from_json(const nlohmann::json& j, AugmentationConfig& a) {
  try {
    a = AugmentationConfig{};
    a.rot90 = j.value("rot90", a.rot90);
    a.shear = j.value("shear", a.shear);
    a.zoom_range = j.value("zoom_range", a.zoom_range);
    a.shift = j.value("shift", a.shift);
    a.flip_h = j.value("flip_h", a.flip_h);
    a.flip_v = j.value("flip_v", a.flip_v);
    a.factor = j.value("factor", a.factor);
    a.class_factors = j.value("class_factors", a.class_factors);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid augmentation config: ") + e.what());
  }
}

Grid3<float> rotate90(const Grid3<float>& g, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return g;
  const Shape3 s = g.shape();
  const Shape3 out_shape = (k % 2 == 0) ? s : Shape3{s.z, s.x, s.y};
  Grid3<float> out(out_shape);
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < out_shape.y; ++y) {
      for (std::int64_t x = 0; x < out_shape.x; ++x) {
        // Counter-clockwise in the (y, x) plane.
        std::int64_t sy = 0, sx = 0;
        if (k == 1) {
          sy = x;
          sx = s.x - 1 - y;
        } else if (k == 2) {
          sy = s.y - 1 - y;
          sx = s.x - 1 - x;
        } else {
          sy = s.y - 1 - x;
          sx = y;
        }
        out(z, y, x) = g(z, sy, sx);
      }
    }
  }
  return out;
}

Grid3<float> flip_x(const Grid3<float>& g) {
  const Shape3 s = g.shape();
  Grid3<float> out(s);
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      for (std::int64_t x = 0; x < s.x; ++x) out(z, y, x) = g(z, y, s.x - 1 - x);
    }
  }
  return out;
}

Grid3<float> flip_y(const Grid3<float>& g) {
  const Shape3 s = g.shape();
  Grid3<float> out(s);
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      for (std::int64_t x = 0; x < s.x; ++x) out(z, y, x) = g(z, s.y - 1 - y, x);
    }
  }
  return out;
}

namespace {

// Output (y, x) samples the input at c + M (p - c) + t.
Grid3<float> affine_plane(const Grid3<float>& g, double m00, double m01, double m10, double m11, double ty, double tx) {
  const Shape3 s = g.shape();
  Grid3<float> out(s);
  const double cy = (static_cast<double>(s.y) - 1.0) / 2.0;
  const double cx = (static_cast<double>(s.x) - 1.0) / 2.0;
  for (std::int64_t y = 0; y < s.y; ++y) {
    for (std::int64_t x = 0; x < s.x; ++x) {
      const double py = static_cast<double>(y) - cy, px = static_cast<double>(x) - cx;
      const double sy = std::clamp(cy + m00 * py + m01 * px + ty, 0.0, static_cast<double>(s.y - 1));
      const double sx = std::clamp(cx + m10 * py + m11 * px + tx, 0.0, static_cast<double>(s.x - 1));
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const std::int64_t y1 = std::min(y0 + 1, s.y - 1), x1 = std::min(x0 + 1, s.x - 1);
      const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
      for (std::int64_t z = 0; z < s.z; ++z) {
        const double v = (1 - fy) * ((1 - fx) * g(z, y0, x0) + fx * g(z, y0, x1)) +
                         fy * ((1 - fx) * g(z, y1, x0) + fx * g(z, y1, x1));
        out(z, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace

VoxelCube augment(const VoxelCube& cube, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  VoxelCube out = cube;
  if (!cfg.any()) return out;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Grid3<float>& g = out.values;
  if (cfg.rot90) {
    const int k = std::uniform_int_distribution<int>(0, 3)(rng);
    if (g.shape().y == g.shape().x) g = rotate90(g, k);
  }
  if (cfg.flip_h && coin(rng)) g = flip_x(g);
  if (cfg.flip_v && coin(rng)) g = flip_y(g);
  const double shear = cfg.shear > 0.0 ? cfg.shear * unit(rng) : 0.0;
  const double zy = cfg.zoom_range > 0.0 ? 1.0 + cfg.zoom_range * unit(rng) : 1.0;
  const double zx = cfg.zoom_range > 0.0 ? 1.0 + cfg.zoom_range * unit(rng) : 1.0;
  const double ty = cfg.shift > 0.0 ? cfg.shift * static_cast<double>(g.shape().y) * unit(rng) : 0.0;
  const double tx = cfg.shift > 0.0 ? cfg.shift * static_cast<double>(g.shape().x) * unit(rng) : 0.0;
  if (shear != 0.0 || zy != 1.0 || zx != 1.0 || ty != 0.0 || tx != 0.0) {
    g = affine_plane(g, zy, 0.0, shear * zy, zx, ty, tx);
  }
  for (float& v : g.storage()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace lungpipe::nn
