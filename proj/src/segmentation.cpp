#include "lungpipe/segmentation.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>

#include "lungpipe/error.hpp"

namespace lungpipe {

std::size_t LungMask::count() const {
  const auto v = mask.values();
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](std::uint8_t b) { return b != 0; }));
}

Components label_components(const Grid3<std::uint8_t>& binary) {
  const Shape3 s = binary.shape();
  Components c{Grid3<std::int32_t>(s, 0), {}, {}};
  std::vector<Index3> stack;
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      for (std::int64_t x = 0; x < s.x; ++x) {
        if (!binary(z, y, x) || c.labels(z, y, x) != 0) continue;
        const auto id = static_cast<std::int32_t>(c.sizes.size() + 1);
        std::size_t size = 0;
        bool border = false;
        c.labels(z, y, x) = id;
        stack.push_back({z, y, x});
        while (!stack.empty()) {
          const Index3 p = stack.back();
          stack.pop_back();
          ++size;
          if (p.z == 0 || p.y == 0 || p.x == 0 || p.z == s.z - 1 || p.y == s.y - 1 || p.x == s.x - 1) {
            border = true;
          }
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const Index3 q{p.z + dz, p.y + dy, p.x + dx};
                if (!s.contains(q) || !binary[q] || c.labels[q] != 0) continue;
                c.labels[q] = id;
                stack.push_back(q);
              }
            }
          }
        }
        c.sizes.push_back(size);
        c.touches_border.push_back(border);
      }
    }
  }
  return c;
}

void fill_cavities(Grid3<std::uint8_t>& binary) {
  const Shape3 s = binary.shape();
  Grid3<std::uint8_t> outside(s, 0);
  std::deque<Index3> queue;
  auto seed = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    if (!binary(z, y, x) && !outside(z, y, x)) {
      outside(z, y, x) = 1;
      queue.push_back({z, y, x});
    }
  };
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      for (std::int64_t x = 0; x < s.x; ++x)
        if (z == 0 || y == 0 || x == 0 || z == s.z - 1 || y == s.y - 1 || x == s.x - 1) seed(z, y, x);

  static constexpr Index3 kFace[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!queue.empty()) {
    const Index3 p = queue.front();
    queue.pop_front();
    for (const auto& d : kFace) {
      const Index3 q{p.z + d.z, p.y + d.y, p.x + d.x};
      if (s.contains(q)) seed(q.z, q.y, q.x);
    }
  }
  auto b = binary.values();
  auto o = outside.values();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!o[i]) b[i] = 1;
  }
}

namespace {

// One pass of the Felzenszwalb-Huttenlocher lower-envelope squared distance transform.
void edt_line(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& zb) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      zb[0] = -kInf;
      zb[1] = kInf;
      continue;
    }
    double sep;
    while (true) {
      const int p = v[k];
      sep = ((f[q] + q * static_cast<double>(q)) - (f[p] + p * static_cast<double>(p))) / (2.0 * (q - p));
      if (sep > zb[k]) break;
      --k;  // zb[0] is -inf, so k stays >= 0
    }
    ++k;
    v[k] = q;
    zb[k] = sep;
    zb[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (zb[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

Grid3<std::uint8_t> dilate_ball(const Grid3<std::uint8_t>& binary, int radius) {
  if (radius <= 0) return binary;
  const Shape3 s = binary.shape();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Grid3<double> dist(s, kInf);
  {
    auto b = binary.values();
    auto d = dist.values();
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b[i]) d[i] = 0.0;
    }
  }
  const std::int64_t longest = std::max({s.z, s.y, s.x});
  std::vector<double> f(static_cast<std::size_t>(longest)), out(f.size()), zb(f.size() + 1);
  std::vector<int> v(f.size());
  auto run = [&](std::int64_t n, auto&& get) {
    f.resize(static_cast<std::size_t>(n));
    out.resize(f.size());
    for (std::int64_t i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = get(i);
    edt_line(f, out, v, zb);
    for (std::int64_t i = 0; i < n; ++i) get(i) = out[static_cast<std::size_t>(i)];
  };
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      run(s.x, [&](std::int64_t i) -> double& { return dist(z, y, i); });
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t x = 0; x < s.x; ++x)
      run(s.y, [&](std::int64_t i) -> double& { return dist(z, i, x); });
  for (std::int64_t y = 0; y < s.y; ++y)
    for (std::int64_t x = 0; x < s.x; ++x)
      run(s.z, [&](std::int64_t i) -> double& { return dist(i, y, x); });

  Grid3<std::uint8_t> out_mask(s, 0);
  const double r2 = static_cast<double>(radius) * radius;
  auto d = dist.values();
  auto o = out_mask.values();
  for (std::size_t i = 0; i < d.size(); ++i) o[i] = d[i] <= r2 ? 1 : 0;
  return out_mask;
}

LungMask segment_lungs(const CtVolume& v, const SegmentationConfig& cfg) {
  v.validate();
  if (cfg.dilation_radius < 0) throw ConfigError("dilation radius must be non-negative");
  const Shape3 s = v.shape();
  Grid3<std::uint8_t> air(s, 0);
  {
    auto src = v.voxels.values();
    auto dst = air.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] < cfg.threshold_hu ? 1 : 0;
  }
  const Components comps = label_components(air);

  std::vector<std::int32_t> interior;
  for (std::size_t i = 0; i < comps.sizes.size(); ++i) {
    if (!comps.touches_border[i]) interior.push_back(static_cast<std::int32_t>(i + 1));
  }
  if (interior.empty()) {
    throw NoLungFound("no interior air component below " + std::to_string(cfg.threshold_hu) +
                      " HU in scan " + v.scan_id);
  }
  std::stable_sort(interior.begin(), interior.end(), [&](std::int32_t a, std::int32_t b) {
    return comps.sizes[static_cast<std::size_t>(a - 1)] > comps.sizes[static_cast<std::size_t>(b - 1)];
  });
  if (interior.size() > 2) interior.resize(2);

  Grid3<std::uint8_t> lungs(s, 0);
  {
    auto lab = comps.labels.values();
    auto dst = lungs.values();
    for (std::size_t i = 0; i < lab.size(); ++i) {
      const auto l = lab[i];
      dst[i] = (l != 0 && std::find(interior.begin(), interior.end(), l) != interior.end()) ? 1 : 0;
    }
  }
  fill_cavities(lungs);
  return LungMask{dilate_ball(lungs, cfg.dilation_radius), v.spacing, v.origin, v.scan_id};
}

ZBounds lung_z_bounds(const LungMask& m) {
  const Shape3 s = m.mask.shape();
  std::int64_t lo = -1, hi = -1;
  for (std::int64_t z = 0; z < s.z; ++z) {
    bool any = false;
    for (std::int64_t y = 0; y < s.y && !any; ++y)
      for (std::int64_t x = 0; x < s.x; ++x)
        if (m.mask(z, y, x)) {
          any = true;
          break;
        }
    if (any) {
      if (lo < 0) lo = z;
      hi = z;
    }
  }
  if (lo < 0) throw NoLungFound("lung mask of scan " + m.scan_id + " is empty");
  return {lo, hi};
}

}  // namespace lungpipe
