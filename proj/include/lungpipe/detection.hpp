#pragma once

#include <vector>

#include "lungpipe/grid.hpp"
#include "lungpipe/segmentation.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe {

/// Difference-of-Gaussian blob detector settings. Diameters in mm.
struct DogConfig {
  double d_min = 5.0;
  double d_max = 60.0;
  int steps = 5;
  double threshold = 0.15;
  double overlap = 0.9;

  /// Throws ConfigError naming the violated bound.
  void validate() const;

  // Supplementary-table configurations; option3 is the default.
  static DogConfig option1() { return {10.0, 40.0, 10, 0.2, 0.9}; }
  static DogConfig option2() { return {5.0, 30.0, 10, 0.15, 0.7}; }
  static DogConfig option3() { return {5.0, 60.0, 5, 0.15, 0.9}; }
};

/// sigma_k = d/(2*sqrt(3)) spaced linearly over `steps` levels, plus one
/// extrapolated level used only to form the last difference.
std::vector<double> dog_sigmas(const DogConfig& cfg);

struct ScaleLevel {
  double sigma = 0.0;
  Grid3<float> response;  // (G(sigma_k) - G(sigma_k+1)) * sigma_k; positive on bright blobs
};

struct ScaleSpace {
  std::vector<ScaleLevel> levels;
  double sigma_step = 0.0;
};

/// Separable Gaussian smoothing (kernel truncated at 4 sigma, edge-replicated).
Grid3<float> gaussian_filter(const Grid3<float>& in, double sigma);

/// Expects a normalized, 1 mm isotropic volume. Throws VolumeTooSmall when an
/// axis is shorter than 4 * sigma_max.
ScaleSpace build_scale_space(const CtVolume& v, const DogConfig& cfg);

/// -sigma^2 * Laplacian(G_sigma * f) evaluated at one voxel.
double normalized_log_at(const CtVolume& v, const Index3& at, double sigma);

struct NoduleCandidate {
  Vec3 center_world;
  Index3 center_index;
  double radius = 0.0;    // mm
  double response = 0.0;  // DoG value at the detected (voxel, level)
  double power = 0.0;     // mean normalized intensity inside the sphere
  double relative_z = 0.0;
  int level = 0;
};

/// Scale-space peaks inside the mask before overlap pruning.
std::vector<NoduleCandidate> find_peaks(const ScaleSpace& space, const CtVolume& v,
                                        const LungMask& m, const DogConfig& cfg);

/// Intersection volume of two spheres divided by the smaller sphere's volume.
double sphere_overlap(double r1, double r2, double center_distance);

/// Greedy pruning in descending response order (ties by lexicographic centre).
std::vector<NoduleCandidate> prune_overlapping(std::vector<NoduleCandidate> candidates,
                                               double max_overlap);

/// Full detector: scale space, peaks, pruning and baseline features.
std::vector<NoduleCandidate> detect_candidates(const CtVolume& v, const LungMask& m,
                                               const DogConfig& cfg);

struct CandidateFeatures {
  double radius = 0.0;
  double power = 0.0;
  double relative_z = 0.0;
};

CandidateFeatures candidate_features(const NoduleCandidate& c, const CtVolume& v, const LungMask& m);

}  // namespace lungpipe
