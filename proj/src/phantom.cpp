#include "lungpipe/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lungpipe/error.hpp"

namespace lungpipe {

namespace {

// Fibonacci-sphere directions used to test sphere-in-ellipsoid containment.
const std::vector<Vec3>& sphere_directions() {
  static const std::vector<Vec3> dirs = [] {
    std::vector<Vec3> d;
    constexpr int n = 2000;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / n;
      const double r = std::sqrt(1.0 - z * z);
      d.push_back({z, r * std::cos(golden * i), r * std::sin(golden * i)});
    }
    return d;
  }();
  return dirs;
}

bool sphere_inside(const Ellipsoid& e, const Vec3& c, double r) {
  if (!e.contains(c)) return false;
  return std::all_of(sphere_directions().begin(), sphere_directions().end(),
                     [&](const Vec3& d) { return e.contains(c + d * r); });
}

// Body wall kept between a lung surface and the body surface.
constexpr double kWallMm = 3.0;

bool ellipsoid_inside(const Ellipsoid& inner, Ellipsoid outer, double margin) {
  outer.radii = outer.radii - Vec3{margin, margin, margin};
  if (outer.radii.z <= 0 || outer.radii.y <= 0 || outer.radii.x <= 0) return false;
  return std::all_of(sphere_directions().begin(), sphere_directions().end(), [&](const Vec3& d) {
    const Vec3 p{inner.center.z + d.z * inner.radii.z, inner.center.y + d.y * inner.radii.y,
                 inner.center.x + d.x * inner.radii.x};
    return outer.contains(p);
  });
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw SpecError("expected a [z, y, x] triple");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.z, v.y, v.x}); }

nlohmann::json ellipsoid_to_json(const Ellipsoid& e) {
  return {{"center", vec_to_json(e.center)}, {"radii", vec_to_json(e.radii)}, {"hu", e.hu}};
}

Ellipsoid ellipsoid_from_json(const nlohmann::json& j, double default_hu) {
  Ellipsoid e;
  e.center = vec_from_json(j.at("center"));
  e.radii = vec_from_json(j.at("radii"));
  e.hu = j.value("hu", default_hu);
  return e;
}

}  // namespace

bool Ellipsoid::contains(const Vec3& p) const {
  const double dz = (p.z - center.z) / radii.z;
  const double dy = (p.y - center.y) / radii.y;
  const double dx = (p.x - center.x) / radii.x;
  return dz * dz + dy * dy + dx * dx <= 1.0;
}

void PhantomSpec::validate() const {
  if (shape.z <= 0 || shape.y <= 0 || shape.x <= 0) throw SpecError("phantom shape must be positive");
  if (!(spacing.z > 0 && spacing.y > 0 && spacing.x > 0)) throw SpecError("phantom spacing must be positive");
  if (noise_sigma < 0.0) throw SpecError("noise_sigma must be non-negative");
  auto positive = [](const Vec3& r) { return r.z > 0 && r.y > 0 && r.x > 0; };
  if (!positive(body.radii)) throw SpecError("body radii must be positive");
  for (std::size_t i = 0; i < lungs.size(); ++i) {
    const Ellipsoid& l = lungs[i];
    if (!positive(l.radii)) throw SpecError("lung radii must be positive");
    const Vec3 lo = l.center - l.radii;
    const Vec3 hi = l.center + l.radii;
    const Vec3 extent{origin.z + (shape.z - 1) * spacing.z, origin.y + (shape.y - 1) * spacing.y,
                      origin.x + (shape.x - 1) * spacing.x};
    if (lo.z <= origin.z + spacing.z || lo.y <= origin.y + spacing.y || lo.x <= origin.x + spacing.x ||
        hi.z >= extent.z - spacing.z || hi.y >= extent.y - spacing.y || hi.x >= extent.x - spacing.x) {
      throw SpecError("lung " + std::to_string(i) + " touches the volume border");
    }
    if (!ellipsoid_inside(l, body, kWallMm))
      throw SpecError("lung " + std::to_string(i) + " comes within " + std::to_string(kWallMm) +
                      " mm of the body surface");
  }
  for (std::size_t i = 0; i < nodules.size(); ++i) {
    const PhantomNodule& n = nodules[i];
    if (!(n.radius > 0.0)) throw SpecError("nodule " + std::to_string(i) + " radius must be positive");
    if (!sphere_inside(lungs[0], n.center, n.radius) && !sphere_inside(lungs[1], n.center, n.radius)) {
      throw SpecError("nodule " + std::to_string(i) + " is not inside a lung");
    }
  }
}

PhantomScan generate_ct(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  PhantomScan out;
  out.volume.voxels = Grid3<float>(spec.shape);
  out.volume.spacing = spec.spacing;
  out.volume.origin = spec.origin;
  out.volume.scan_id = spec.scan_id;
  out.lung_mask = Grid3<std::uint8_t>(spec.shape, 0);
  out.nodules = spec.nodules;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Shape3 s = spec.shape;
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      for (std::int64_t x = 0; x < s.x; ++x) {
        const Vec3 p = out.volume.world_of({z, y, x});
        double hu = phantom_hu::kAir;
        if (spec.body.contains(p)) hu = spec.body.hu;
        for (const auto& l : spec.lungs) {
          if (l.contains(p)) {
            hu = l.hu;
            out.lung_mask(z, y, x) = 1;
          }
        }
        for (const auto& n : spec.nodules) {
          if (distance(p, n.center) <= n.radius) {
            const double sign = ((z + y + x) % 2 == 0) ? 1.0 : -1.0;
            hu = n.hu + sign * n.texture;
          }
        }
        if (spec.noise_sigma > 0.0) hu += spec.noise_sigma * noise(rng);
        out.volume.voxels(z, y, x) = static_cast<float>(hu);
      }
    }
  }
  return out;
}

PhantomSpec random_phantom_spec(const RandomPhantomOptions& opts, std::uint64_t seed,
                                const std::string& scan_id) {
  std::mt19937_64 rng(seed);
  PhantomSpec spec;
  spec.scan_id = scan_id;
  spec.shape = opts.shape;
  spec.noise_sigma = opts.noise_sigma;
  const Vec3 mid{(opts.shape.z - 1) / 2.0, (opts.shape.y - 1) / 2.0, (opts.shape.x - 1) / 2.0};
  spec.body = {mid, {mid.z - 2.0, mid.y - 4.0, mid.x - 4.0}, phantom_hu::kBody};

  for (int attempt = 0;; ++attempt) {
    if (attempt > 200) throw SpecError("could not place lungs inside the requested shape");
    const double jz = uniform(rng, 0.85, 1.0), jy = uniform(rng, 0.85, 1.0), jx = uniform(rng, 0.85, 1.0);
    Vec3 radii{(mid.z - 10.0) * jz, (mid.y - 20.0) * jy, (mid.x / 2.0 - 8.0) * jx};
    const double sep = mid.x / 2.0 + uniform(rng, -2.0, 2.0);
    const Vec3 c0{mid.z + uniform(rng, -2.0, 2.0), mid.y + uniform(rng, -2.0, 2.0), mid.x - sep};
    const Vec3 c1{mid.z + uniform(rng, -2.0, 2.0), mid.y + uniform(rng, -2.0, 2.0), mid.x + sep};
    for (int shrink = 0; shrink < 60; ++shrink) {
      if (ellipsoid_inside({c0, radii, 0.0}, spec.body, kWallMm) &&
          ellipsoid_inside({c1, radii, 0.0}, spec.body, kWallMm))
        break;
      radii = radii * 0.97;
    }
    spec.lungs[0] = {c0, radii, phantom_hu::kLung};
    spec.lungs[1] = {c1, radii, phantom_hu::kLung};
    spec.nodules.clear();
    try {
      spec.validate();
      break;
    } catch (const SpecError&) {
    }
  }

  static const char* kLabels[] = {"1", "4", "5"};
  for (int i = 0; i < opts.n_nodules; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const double r = uniform(rng, opts.min_diameter, opts.max_diameter) / 2.0;
      const Ellipsoid& lung = spec.lungs[static_cast<std::size_t>(uniform(rng, 0.0, 2.0) >= 1.0 ? 1 : 0)];
      const Vec3 c{uniform(rng, lung.center.z - lung.radii.z, lung.center.z + lung.radii.z),
                   uniform(rng, lung.center.y - lung.radii.y, lung.center.y + lung.radii.y),
                   uniform(rng, lung.center.x - lung.radii.x, lung.center.x + lung.radii.x)};
      if (!sphere_inside(lung, c, r + opts.lung_wall_margin)) continue;
      const bool clash = std::any_of(spec.nodules.begin(), spec.nodules.end(), [&](const PhantomNodule& o) {
        return distance(o.center, c) < o.radius + r + opts.nodule_gap;
      });
      if (clash) continue;
      PhantomNodule n;
      n.center = c;
      n.radius = r;
      n.hu = uniform(rng, phantom_hu::kNoduleMin, phantom_hu::kNoduleMax);
      if (opts.cancer == 0) {
        n.label = "1";
      } else if (opts.cancer == 1 && i == 0) {
        n.label = kLabels[std::uniform_int_distribution<int>(1, 2)(rng)];
      } else {
        n.label = kLabels[std::uniform_int_distribution<int>(0, 2)(rng)];
      }
      spec.nodules.push_back(n);
      placed = true;
    }
    if (!placed) throw SpecError("could not place nodule " + std::to_string(i));
  }
  spec.cancer = std::any_of(spec.nodules.begin(), spec.nodules.end(),
                            [](const PhantomNodule& n) { return n.label == "4" || n.label == "5"; })
                    ? 1
                    : 0;
  spec.validate();
  return spec;
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{{"scan_id", s.scan_id},
                     {"shape", {s.shape.z, s.shape.y, s.shape.x}},
                     {"spacing", vec_to_json(s.spacing)},
                     {"origin", vec_to_json(s.origin)},
                     {"body", ellipsoid_to_json(s.body)},
                     {"lungs", {ellipsoid_to_json(s.lungs[0]), ellipsoid_to_json(s.lungs[1])}},
                     {"noise_sigma", s.noise_sigma},
                     {"cancer", s.cancer}};
  j["nodules"] = nlohmann::json::array();
  for (const auto& n : s.nodules) {
    j["nodules"].push_back({{"center", vec_to_json(n.center)},
                            {"radius", n.radius},
                            {"hu", n.hu},
                            {"label", n.label},
                            {"texture", n.texture}});
  }
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  try {
    s = PhantomSpec{};
    s.scan_id = j.value("scan_id", std::string("phantom"));
    const auto& sh = j.at("shape");
    if (!sh.is_array() || sh.size() != 3) throw SpecError("shape must be [z, y, x]");
    s.shape = {sh[0].get<std::int64_t>(), sh[1].get<std::int64_t>(), sh[2].get<std::int64_t>()};
    if (j.contains("spacing")) s.spacing = vec_from_json(j["spacing"]);
    if (j.contains("origin")) s.origin = vec_from_json(j["origin"]);
    s.body = ellipsoid_from_json(j.at("body"), phantom_hu::kBody);
    const auto& lungs = j.at("lungs");
    if (!lungs.is_array() || lungs.size() != 2) throw SpecError("exactly two lungs are required");
    s.lungs[0] = ellipsoid_from_json(lungs[0], phantom_hu::kLung);
    s.lungs[1] = ellipsoid_from_json(lungs[1], phantom_hu::kLung);
    s.noise_sigma = j.value("noise_sigma", 0.0);
    s.cancer = j.value("cancer", 0);
    for (const auto& n : j.value("nodules", nlohmann::json::array())) {
      PhantomNodule p;
      p.center = vec_from_json(n.at("center"));
      p.radius = n.at("radius").get<double>();
      p.hu = n.value("hu", 0.0);
      p.label = n.value("label", std::string("1"));
      p.texture = n.value("texture", 0.0);
      s.nodules.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("invalid phantom spec: ") + e.what());
  }
}

VoxelCube render_nodule_cube(double radius, double texture_amplitude, double noise_sigma,
                             std::uint64_t seed, const Vec3& offset) {
  constexpr double kBackground = (phantom_hu::kLung - kDefaultClipLo) / (kDefaultClipHi - kDefaultClipLo);
  constexpr double kNodule = (0.0 - kDefaultClipLo) / (kDefaultClipHi - kDefaultClipLo);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  VoxelCube cube{Grid3<float>({kCubeSide, kCubeSide, kCubeSide}), {}, "synthetic"};
  const Vec3 c{kCubeSide / 2.0 + offset.z, kCubeSide / 2.0 + offset.y, kCubeSide / 2.0 + offset.x};
  for (int z = 0; z < kCubeSide; ++z) {
    for (int y = 0; y < kCubeSide; ++y) {
      for (int x = 0; x < kCubeSide; ++x) {
        double v = kBackground;
        if (distance({static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)}, c) <= radius) {
          v = kNodule + (((z + y + x) % 2 == 0) ? texture_amplitude : -texture_amplitude);
        }
        if (noise_sigma > 0.0) v += noise_sigma * noise(rng);
        cube.values(z, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return cube;
}

CubeDataset generate_cube_dataset(const std::array<int, 3>& n_per_class, Scheme scheme,
                                  Separability separability, std::uint64_t seed,
                                  const CubeDatasetOptions& opts) {
  std::mt19937_64 rng(seed);
  CubeDataset ds;
  ds.class_order = scheme_class_names(scheme);
  for (int cls = 0; cls < 3; ++cls) {
    const auto k = static_cast<std::size_t>(cls);
    for (int i = 0; i < n_per_class[k]; ++i) {
      double radius = 0.0, amplitude = 0.0;
      switch (separability) {
        case Separability::Size:
          radius = opts.size_radii[k] + uniform(rng, -opts.radius_jitter, opts.radius_jitter);
          break;
        case Separability::Texture:
          radius = uniform(rng, opts.texture_radius_min, opts.texture_radius_max);
          amplitude = opts.texture_amplitude[k];
          break;
        case Separability::Mixed:
          radius = opts.size_radii[k] + uniform(rng, -opts.radius_jitter, opts.radius_jitter);
          amplitude = opts.texture_amplitude[k];
          break;
      }
      const Vec3 offset{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
      LabeledCube item;
      item.cube = render_nodule_cube(radius, amplitude, opts.noise_sigma, rng(), offset);
      item.label = cls;
      ds.items.push_back(std::move(item));
    }
  }
  // Group cubes into synthetic subjects holding 1..max_cubes_per_subject cubes.
  std::vector<std::size_t> order(ds.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t pos = 0;
  int subject = 0;
  std::uniform_int_distribution<int> group_size(1, std::max(1, opts.max_cubes_per_subject));
  while (pos < order.size()) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(group_size(rng)), order.size() - pos);
    char name[32];
    std::snprintf(name, sizeof(name), "subject_%04d", subject++);
    for (std::size_t i = 0; i < n; ++i) {
      auto& item = ds.items[order[pos + i]];
      item.subject_id = name;
      item.cube.scan_id = name;
    }
    pos += n;
  }
  return ds;
}

}  // namespace lungpipe
