#include "lungpipe/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lungpipe/error.hpp"

namespace lungpipe {

namespace {

const double kSqrt3 = std::sqrt(3.0);

std::vector<float> gaussian_kernel(double sigma, int& radius) {
  radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> w(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  std::vector<double> tmp(w.size());
  for (int i = -radius; i <= radius; ++i) {
    tmp[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += tmp[static_cast<std::size_t>(i + radius)];
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(tmp[i] / sum);
  return w;
}

std::vector<double> gaussian_weights(double sigma, int radius) {
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    w[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += w[static_cast<std::size_t>(i + radius)];
  }
  for (double& x : w) x /= sum;
  return w;
}

std::int64_t clamp_index(std::int64_t i, std::int64_t n) { return std::clamp<std::int64_t>(i, 0, n - 1); }

}  // namespace

void DogConfig::validate() const {
  if (!(d_min > 0.0)) throw ConfigError("dog.d_min must be > 0");
  if (!(d_min < d_max)) throw ConfigError("dog.d_min must be < dog.d_max");
  if (steps < 2) throw ConfigError("dog.steps must be >= 2");
  if (!(threshold > 0.0)) throw ConfigError("dog.threshold must be > 0");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("dog.overlap must lie in [0, 1]");
}

std::vector<double> dog_sigmas(const DogConfig& cfg) {
  cfg.validate();
  const double lo = cfg.d_min / (2.0 * kSqrt3);
  const double hi = cfg.d_max / (2.0 * kSqrt3);
  const double step = (hi - lo) / (cfg.steps - 1);
  std::vector<double> s;
  for (int k = 0; k <= cfg.steps; ++k) s.push_back(lo + step * k);
  s[static_cast<std::size_t>(cfg.steps - 1)] = hi;
  return s;
}

Grid3<float> gaussian_filter(const Grid3<float>& in, double sigma) {
  int r = 0;
  const std::vector<float> w = gaussian_kernel(sigma, r);
  const Shape3 s = in.shape();
  const auto nx = static_cast<std::size_t>(s.x);
  const auto ny = static_cast<std::size_t>(s.y);
  const std::size_t plane = nx * ny;
  const std::size_t taps = w.size();

  // x pass
  Grid3<float> a(s);
  std::vector<float> padded(nx + 2 * static_cast<std::size_t>(r));
  std::vector<float> acc(std::max(plane, nx));
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      const float* row = &in(z, y, 0);
      for (std::int64_t i = -r; i < s.x + r; ++i) padded[static_cast<std::size_t>(i + r)] = row[clamp_index(i, s.x)];
      float* out = &a(z, y, 0);
      std::fill(out, out + nx, 0.0f);
      for (std::size_t k = 0; k < taps; ++k) {
        const float wk = w[k];
        const float* p = padded.data() + k;
        for (std::size_t i = 0; i < nx; ++i) out[i] += wk * p[i];
      }
    }
  }
  // y pass
  Grid3<float> b(s);
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      float* out = &b(z, y, 0);
      std::fill(out, out + nx, 0.0f);
      for (std::size_t k = 0; k < taps; ++k) {
        const float wk = w[k];
        const float* p = &a(z, clamp_index(y + static_cast<std::int64_t>(k) - r, s.y), 0);
        for (std::size_t i = 0; i < nx; ++i) out[i] += wk * p[i];
      }
    }
  }
  // z pass, reusing `a`
  for (std::int64_t z = 0; z < s.z; ++z) {
    float* out = &a(z, 0, 0);
    std::fill(out, out + plane, 0.0f);
    for (std::size_t k = 0; k < taps; ++k) {
      const float wk = w[k];
      const float* p = &b(clamp_index(z + static_cast<std::int64_t>(k) - r, s.z), 0, 0);
      for (std::size_t i = 0; i < plane; ++i) out[i] += wk * p[i];
    }
  }
  return a;
}

ScaleSpace build_scale_space(const CtVolume& v, const DogConfig& cfg) {
  v.validate();
  const std::vector<double> sigmas = dog_sigmas(cfg);
  const double sigma_max = sigmas[static_cast<std::size_t>(cfg.steps - 1)];
  const Shape3 s = v.shape();
  const double min_extent = std::min({s.z * v.spacing.z, s.y * v.spacing.y, s.x * v.spacing.x});
  if (min_extent < 4.0 * sigma_max) {
    throw VolumeTooSmall("volume extent " + std::to_string(min_extent) +
                         " mm is below 4*sigma_max = " + std::to_string(4.0 * sigma_max) + " mm");
  }
  ScaleSpace space;
  space.sigma_step = sigmas[1] - sigmas[0];
  Grid3<float> current = gaussian_filter(v.voxels, sigmas[0]);
  for (int k = 0; k < cfg.steps; ++k) {
    Grid3<float> next = gaussian_filter(v.voxels, sigmas[static_cast<std::size_t>(k + 1)]);
    ScaleLevel level{sigmas[static_cast<std::size_t>(k)], Grid3<float>(s)};
    const auto sk = static_cast<float>(level.sigma);
    auto cur = current.values();
    auto nxt = next.values();
    auto out = level.response.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (cur[i] - nxt[i]) * sk;
    space.levels.push_back(std::move(level));
    current = std::move(next);
  }
  return space;
}

double normalized_log_at(const CtVolume& v, const Index3& at, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  const std::vector<double> g = gaussian_weights(sigma, r);
  double var = 0.0;
  for (int i = -r; i <= r; ++i) var += g[static_cast<std::size_t>(i + r)] * i * i;
  const Shape3 s = v.shape();
  double acc0 = 0.0, acc2 = 0.0;
  for (int dz = -r; dz <= r; ++dz) {
    const std::int64_t z = clamp_index(at.z + dz, s.z);
    const double gz = g[static_cast<std::size_t>(dz + r)];
    double sz0 = 0.0, sz2 = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
      const std::int64_t y = clamp_index(at.y + dy, s.y);
      const double gy = g[static_cast<std::size_t>(dy + r)];
      const float* row = &v.voxels(z, y, 0);
      double sx0 = 0.0, sx2 = 0.0;
      for (int dx = -r; dx <= r; ++dx) {
        const double f = row[clamp_index(at.x + dx, s.x)] * g[static_cast<std::size_t>(dx + r)];
        sx0 += f;
        sx2 += f * dx * dx;
      }
      sz0 += gy * sx0;
      sz2 += gy * (sx2 + dy * dy * sx0);
    }
    acc0 += gz * sz0;
    acc2 += gz * (sz2 + dz * dz * sz0);
  }
  return -(acc2 - 3.0 * var * acc0) / var;
}

namespace {

// Sub-level scale estimate: maximise the scale-normalized Laplacian response
// at the peak voxel between the neighbouring levels (golden-section search).
double refine_sigma(const CtVolume& v, const Index3& at, double lo, double hi) {
  if (hi - lo < 1e-6) return lo;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = normalized_log_at(v, at, c), fd = normalized_log_at(v, at, d);
  for (int it = 0; it < 14; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = normalized_log_at(v, at, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = normalized_log_at(v, at, d);
    }
  }
  return 0.5 * (a + b);
}

// Centre estimate: background-subtracted intensity centroid inside the
// candidate sphere, re-centred a few times. Returned as a voxel offset from the peak.
Vec3 refine_center(const CtVolume& v, const LungMask& m, const Index3& peak, double radius_mm) {
  constexpr int kIterations = 3;
  constexpr double kShellMm = 2.0;
  const Shape3 s = v.shape();
  const double r = radius_mm / v.spacing.x;
  const double shell = r + kShellMm / v.spacing.x;
  const int reach = static_cast<int>(std::ceil(shell)) + 1;
  Vec3 off{0.0, 0.0, 0.0};
  for (int it = 0; it < kIterations; ++it) {
    double bg = 0.0;
    std::size_t n_bg = 0;
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const Index3 q{peak.z + dz, peak.y + dy, peak.x + dx};
          if (!s.contains(q)) continue;
          const double d = (Vec3{double(dz), double(dy), double(dx)} - off).norm();
          if (d > r && d <= shell) {
            bg += v.voxels(q.z, q.y, q.x);
            ++n_bg;
          }
        }
    if (n_bg == 0) break;
    bg /= static_cast<double>(n_bg);
    double wsum = 0.0;
    Vec3 acc{0.0, 0.0, 0.0};
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const Index3 q{peak.z + dz, peak.y + dy, peak.x + dx};
          if (!s.contains(q)) continue;
          const Vec3 o{double(dz), double(dy), double(dx)};
          if ((o - off).norm() > r) continue;
          const double w = v.voxels(q.z, q.y, q.x) - bg;
          if (w <= 0.0) continue;
          wsum += w;
          acc = acc + o * w;
        }
    if (wsum <= 0.0) break;
    const Vec3 next = acc * (1.0 / wsum);
    if (next.norm() > r) break;
    const Index3 q{peak.z + std::lround(next.z), peak.y + std::lround(next.y), peak.x + std::lround(next.x)};
    if (!s.contains(q) || !m.mask(q.z, q.y, q.x)) break;
    off = next;
  }
  return off;
}

}  // namespace

std::vector<NoduleCandidate> find_peaks(const ScaleSpace& space, const CtVolume& v,
                                        const LungMask& m, const DogConfig& cfg) {
  const Shape3 s = v.shape();
  if (!(m.mask.shape() == s)) throw ConfigError("mask and volume shapes differ");
  const auto nlev = static_cast<int>(space.levels.size());
  const double sigma_min = space.levels.front().sigma;
  const double sigma_max = space.levels.back().sigma;
  std::vector<NoduleCandidate> out;
  for (int k = 0; k < nlev; ++k) {
    const auto& resp = space.levels[static_cast<std::size_t>(k)].response;
    for (std::int64_t z = 0; z < s.z; ++z) {
      for (std::int64_t y = 0; y < s.y; ++y) {
        for (std::int64_t x = 0; x < s.x; ++x) {
          const float val = resp(z, y, x);
          if (!(val >= cfg.threshold) || !m.mask(z, y, x)) continue;
          bool is_max = true;
          for (int kk = std::max(0, k - 1); kk <= std::min(nlev - 1, k + 1) && is_max; ++kk) {
            const auto& other = space.levels[static_cast<std::size_t>(kk)].response;
            for (std::int64_t dz = -1; dz <= 1 && is_max; ++dz) {
              const std::int64_t zz = z + dz;
              if (zz < 0 || zz >= s.z) continue;
              for (std::int64_t dy = -1; dy <= 1 && is_max; ++dy) {
                const std::int64_t yy = y + dy;
                if (yy < 0 || yy >= s.y) continue;
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                  const std::int64_t xx = x + dx;
                  if (xx < 0 || xx >= s.x) continue;
                  if (kk == k && dz == 0 && dy == 0 && dx == 0) continue;
                  if (other(zz, yy, xx) >= val) {
                    is_max = false;
                    break;
                  }
                }
              }
            }
          }
          if (!is_max) continue;
          NoduleCandidate c;
          c.center_index = {z, y, x};
          c.center_world = v.world_of(c.center_index);
          c.response = val;
          c.level = k;
          const double lo = k > 0 ? space.levels[static_cast<std::size_t>(k - 1)].sigma : sigma_min;
          const double hi = k + 1 < nlev ? space.levels[static_cast<std::size_t>(k + 1)].sigma : sigma_max;
          const double sigma = refine_sigma(v, c.center_index, lo, hi);
          c.radius = std::clamp(sigma * kSqrt3, cfg.d_min / 2.0, cfg.d_max / 2.0);
          const Vec3 off = refine_center(v, m, c.center_index, c.radius);
          c.center_world = c.center_world + Vec3{off.z * v.spacing.z, off.y * v.spacing.y, off.x * v.spacing.x};
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

double sphere_overlap(double r1, double r2, double d) {
  const double rs = std::min(r1, r2);
  const double rl = std::max(r1, r2);
  if (d >= r1 + r2) return 0.0;
  if (d <= rl - rs) return 1.0;
  const double pi = std::numbers::pi;
  const double inter = pi * (r1 + r2 - d) * (r1 + r2 - d) *
                       (d * d + 2.0 * d * r2 - 3.0 * r2 * r2 + 2.0 * d * r1 + 6.0 * r1 * r2 - 3.0 * r1 * r1) /
                       (12.0 * d);
  return std::clamp(inter / (4.0 / 3.0 * pi * rs * rs * rs), 0.0, 1.0);
}

std::vector<NoduleCandidate> prune_overlapping(std::vector<NoduleCandidate> candidates, double max_overlap) {
  std::sort(candidates.begin(), candidates.end(), [](const NoduleCandidate& a, const NoduleCandidate& b) {
    if (a.response != b.response) return a.response > b.response;
    return a.center_index < b.center_index;
  });
  std::vector<NoduleCandidate> kept;
  for (const auto& c : candidates) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const NoduleCandidate& k) {
      return sphere_overlap(c.radius, k.radius, distance(c.center_world, k.center_world)) > max_overlap;
    });
    if (!clash) kept.push_back(c);
  }
  return kept;
}

CandidateFeatures candidate_features(const NoduleCandidate& c, const CtVolume& v, const LungMask& m) {
  const Shape3 s = v.shape();
  const auto reach = [&](double sp) { return static_cast<std::int64_t>(std::ceil(c.radius / sp)); };
  const std::int64_t rz = reach(v.spacing.z), ry = reach(v.spacing.y), rx = reach(v.spacing.x);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::int64_t z = std::max<std::int64_t>(0, c.center_index.z - rz); z <= std::min(s.z - 1, c.center_index.z + rz); ++z) {
    for (std::int64_t y = std::max<std::int64_t>(0, c.center_index.y - ry); y <= std::min(s.y - 1, c.center_index.y + ry); ++y) {
      for (std::int64_t x = std::max<std::int64_t>(0, c.center_index.x - rx); x <= std::min(s.x - 1, c.center_index.x + rx); ++x) {
        if (distance(v.world_of({z, y, x}), c.center_world) <= c.radius) {
          sum += v.voxels(z, y, x);
          ++n;
        }
      }
    }
  }
  CandidateFeatures f;
  f.radius = c.radius;
  f.power = n > 0 ? sum / static_cast<double>(n) : static_cast<double>(v.voxels[c.center_index]);
  const ZBounds zb = lung_z_bounds(m);
  if (zb.z_max == zb.z_min) {
    f.relative_z = 0.5;
  } else {
    f.relative_z = std::clamp(static_cast<double>(c.center_index.z - zb.z_min) /
                                  static_cast<double>(zb.z_max - zb.z_min),
                              0.0, 1.0);
  }
  return f;
}

std::vector<NoduleCandidate> detect_candidates(const CtVolume& v, const LungMask& m, const DogConfig& cfg) {
  cfg.validate();
  if (m.count() == 0) return {};
  const ScaleSpace space = build_scale_space(v, cfg);
  auto kept = prune_overlapping(find_peaks(space, v, m, cfg), cfg.overlap);
  for (auto& c : kept) {
    const CandidateFeatures f = candidate_features(c, v, m);
    c.power = f.power;
    c.relative_z = f.relative_z;
  }
  return kept;
}

}  // namespace lungpipe
