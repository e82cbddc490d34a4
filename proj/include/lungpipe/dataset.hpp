#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lungpipe/annotations.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe {

/// Labeled cubes plus the class names their labels index.
struct CubeDataset {
  std::vector<std::string> class_order;
  std::vector<LabeledCube> items;

  std::vector<int> class_counts() const;
};

/// Directory layout: index.csv (file, label, class, subject_id, z, y, x),
/// classes.txt (one class name per line) and cubes/NNNNNN.mhd.
void save_cube_dataset(const CubeDataset& ds, const std::filesystem::path& dir);
/// Throws IoError, ParseError or FormatError.
CubeDataset load_cube_dataset(const std::filesystem::path& dir);

/// Load, resample to 1 mm and normalize one scan.
CtVolume load_preprocessed(const std::filesystem::path& mhd, double clip_lo = kDefaultClipLo,
                           double clip_hi = kDefaultClipHi);

struct MalignancyDatasetReport {
  CubeDataset dataset;
  std::size_t excluded = 0;  // mean score rounding to an excluded class
  std::vector<std::string> missing_scans;
};

/// One cube per consolidated nodule whose mean score maps to a scheme class.
/// Scans are looked up by id in `scans`; annotations of missing scans are reported.
MalignancyDatasetReport build_malignancy_dataset(const std::vector<NoduleAnnotation>& annotations, Scheme scheme,
                                                 const std::map<std::string, std::filesystem::path>& scans);

/// Labeled candidate location (world mm) for the false-positive network.
struct LabeledLocation {
  std::string scan_id;
  Vec3 center_world;
  int label = 0;
};

/// Candidate CSV with columns scan_id|seriesuid, z|coordZ, y|coordY, x|coordX, class|label.
std::vector<LabeledLocation> read_candidate_csv(const std::filesystem::path& csv);

/// Cubes around each location; class order {"non-nodule", "nodule"}.
CubeDataset build_candidate_dataset(const std::vector<LabeledLocation>& locations,
                                    const std::map<std::string, std::filesystem::path>& scans);

}  // namespace lungpipe
