#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lungpipe/annotations.hpp"
#include "lungpipe/detection.hpp"
#include "lungpipe/neural/model.hpp"
#include "lungpipe/neural/train.hpp"
#include "lungpipe/pipeline.hpp"
#include "lungpipe/segmentation.hpp"

namespace lungpipe {

inline constexpr int kConfigVersion = 1;

struct CvSettings {
  int k = 5;
  std::string grids = "full";  // "full" or "compact"
  double decision_threshold = 0.5;
};

struct NetworkRecipe {
  Scheme scheme = Scheme::S145;
  nn::ArchitectureSpec architecture;
  nn::TrainConfig training;
};

/// One run: every stage's parameters plus the input and output locations.
struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;

  std::filesystem::path scans;   // directory of .mhd scans; scan id = file stem
  std::filesystem::path labels;  // CSV scan_id,cancer
  std::filesystem::path out;     // output directory
  std::string report_name = "report.json";  // manifest.json is written beside it
  std::filesystem::path mal_model;
  std::filesystem::path fp_model;

  double clip_lo = kDefaultClipLo;
  double clip_hi = kDefaultClipHi;
  double iso = 1.0;
  SegmentationConfig segmentation;
  DogConfig detection;
  double fp_threshold = 0.5;
  IntegrationMode mode = IntegrationMode::Baseline;
  CvSettings cv;

  NetworkRecipe malignancy;
  NetworkRecipe false_positive;

  /// The document this config was parsed from, relative paths resolved.
  nlohmann::json source;

  std::vector<ClassifierGrid> classifier_grids() const;
};

/// Every violation as "<key>: <constraint>". Relative paths resolve against
/// `base_dir`; their existence is checked only when `check_paths` is set.
std::vector<std::string> validate_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                                         bool check_paths = true);

/// Throws ConfigError listing every violation.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}, bool check_paths = true);
RunConfig load_config(const std::filesystem::path& file, bool check_paths = true);

/// The shipped defaults (paths relative to the config file).
nlohmann::json default_config_json();

/// FNV-1a of the canonical (sorted-key, compact) serialization.
std::string config_hash(const nlohmann::json& j);

}  // namespace lungpipe
