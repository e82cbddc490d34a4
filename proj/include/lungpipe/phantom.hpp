#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "lungpipe/annotations.hpp"
#include "lungpipe/dataset.hpp"
#include "lungpipe/detection.hpp"
#include "lungpipe/grid.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe {

/// HU palette used by the synthetic scans.
namespace phantom_hu {
inline constexpr double kAir = -1000.0;
inline constexpr double kBody = 40.0;
inline constexpr double kLung = -800.0;
inline constexpr double kNoduleMin = -100.0;
inline constexpr double kNoduleMax = 100.0;
}  // namespace phantom_hu

struct Ellipsoid {
  Vec3 center;
  Vec3 radii;
  double hu = 0.0;

  bool contains(const Vec3& p) const;
};

struct PhantomNodule {
  Vec3 center;
  double radius = 0.0;
  double hu = 0.0;
  std::string label;     // malignancy class name, e.g. "4"
  double texture = 0.0;  // checkerboard amplitude in HU inside the sphere
};

struct PhantomSpec {
  std::string scan_id = "phantom";
  Shape3 shape{96, 128, 160};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  Ellipsoid body;
  std::array<Ellipsoid, 2> lungs;
  std::vector<PhantomNodule> nodules;
  double noise_sigma = 0.0;
  /// Patient-level cancer label carried into the cohort labels file.
  int cancer = 0;

  /// Throws SpecError when a nodule leaves its lung, a lung touches the
  /// border or comes within 3 mm of the body surface, or a radius is non-positive.
  void validate() const;
};

struct PhantomScan {
  CtVolume volume;
  Grid3<std::uint8_t> lung_mask;  // analytic lung union (nodules included)
  std::vector<PhantomNodule> nodules;
};

/// Rasterize the analytic scene (voxel-centre containment) and add Gaussian noise.
PhantomScan generate_ct(const PhantomSpec& spec, std::uint64_t seed);

struct RandomPhantomOptions {
  Shape3 shape{100, 128, 176};
  int n_nodules = 3;
  double min_diameter = 6.0;
  double max_diameter = 40.0;
  double noise_sigma = 20.0;
  double lung_wall_margin = 4.0;  // mm between nodule surface and lung surface
  double nodule_gap = 4.0;        // mm between nodule surfaces
  /// -1: labels drawn freely; 0: every nodule labelled "1"; 1: at least one "4" or "5".
  int cancer = -1;
};

/// Random but valid scene: body, two lungs, non-overlapping nodules.
PhantomSpec random_phantom_spec(const RandomPhantomOptions& opts, std::uint64_t seed,
                                const std::string& scan_id = "phantom");

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

enum class Separability { Texture, Size, Mixed };


struct CubeDatasetOptions {
  std::array<double, 3> size_radii{4.0, 8.0, 12.0};       // mm, per class
  std::array<double, 3> texture_amplitude{0.0, 0.1, 0.2};  // normalized units
  double radius_jitter = 0.5;
  double texture_radius_min = 5.0;
  double texture_radius_max = 9.0;
  double noise_sigma = 0.02;
  int max_cubes_per_subject = 3;
};

/// Labeled 32^3 cubes whose class is carried by sphere size, interior texture or both.
CubeDataset generate_cube_dataset(const std::array<int, 3>& n_per_class, Scheme scheme,
                                  Separability separability, std::uint64_t seed,
                                  const CubeDatasetOptions& opts = {});

/// Render one normalized nodule cube (background lung, bright sphere, optional
/// checkerboard texture of the given amplitude).
VoxelCube render_nodule_cube(double radius, double texture_amplitude, double noise_sigma,
                             std::uint64_t seed, const Vec3& offset = {});


}  // namespace lungpipe
