#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lungpipe/grid.hpp"

namespace lungpipe {

/// One radiologist's reading of one nodule.
struct RadiologistRead {
  std::string scan_id;
  std::string reader_id;
  std::string nodule_id;
  Vec3 centroid_world;
  int malignancy = 0;  // 1..5

  friend bool operator==(const RadiologistRead&, const RadiologistRead&) = default;
};

/// Parse a reading-session XML document (see docs/annotation_xml.md).
/// Nodules without a malignancy characteristic are skipped.
/// Throws ParseError (with line context) or ValidationError.
std::vector<RadiologistRead> parse_lidc_xml(std::string_view document);
std::vector<RadiologistRead> parse_lidc_xml_file(const std::filesystem::path& path);

/// Per-radiologist score CSV: scan_id,reader_id,z,y,x,malignancy
std::vector<RadiologistRead> parse_score_csv(std::istream& in);

/// LUNA16-style reference nodule.
struct ReferenceNodule {
  std::string scan_id;
  Vec3 center_world;
  double diameter_mm = 0.0;
};

/// seriesuid,coordX,coordY,coordZ,diameter_mm
std::vector<ReferenceNodule> parse_reference_csv(std::istream& in);

struct NoduleAnnotation {
  std::string scan_id;
  Vec3 centroid_world;
  double diameter_mm = 0.0;
  std::vector<int> scores;
  std::vector<std::string> readers;
  double mean_score = 0.0;
};

struct Consolidation {
  std::vector<NoduleAnnotation> annotations;  // one per kept reference nodule, reference order
  std::vector<RadiologistRead> unmatched;
};

/// Match each read to the nearest reference nodule of the same scan whose
/// centre lies closer than diameter/2 (one read per reader and nodule: the
/// closest). Keep nodules with at least `min_reads` matched readers.
Consolidation consolidate(const std::vector<RadiologistRead>& reads,
                          const std::vector<ReferenceNodule>& reference, std::size_t min_reads = 3);

enum class Scheme { S145, S1and245 };
enum class MalignancyClass { C1, C1and2, C4, C5 };

std::string to_string(Scheme s);
Scheme parse_scheme(std::string_view s);
std::string to_string(MalignancyClass c);
/// The three classes a scheme emits, in model output order.
std::vector<MalignancyClass> scheme_classes(Scheme s);
std::vector<std::string> scheme_class_names(Scheme s);

/// Round half up; scheme 145 keeps 1/4/5, scheme 1and245 merges 1 and 2.
/// Returns nullopt for excluded scores. Throws ValidationError outside [1,5].
std::optional<MalignancyClass> assign_class(double mean_score, Scheme scheme);

/// Position of the class in its scheme's output order (1 or 1&2 -> 0, 4 -> 1, 5 -> 2).
int class_index(MalignancyClass c);

struct LabeledNodule {
  NoduleAnnotation annotation;
  MalignancyClass cls = MalignancyClass::C1;
};

/// One group (subject) with its per-class item counts.
struct GroupCounts {
  std::string group;
  std::vector<int> counts;
};

/// Assign groups to `fractions.size()` sides so that per-class totals on each
/// side approach fraction * class total. Greedy (largest group first,
/// seed-shuffled ties) followed by single-group moves while the total
/// absolute deviation decreases. Returns the side of each input group.
std::vector<int> assign_groups_stratified(const std::vector<GroupCounts>& groups,
                                          const std::vector<double>& fractions, std::uint64_t seed);

struct DatasetSplit {
  std::vector<std::string> train_scan_ids;
  std::vector<std::string> val_scan_ids;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;  // StratificationWarning entries

  bool in_train(const std::string& scan_id) const;
};

/// Subject-grouped stratified train/validation split.
DatasetSplit split_stratified(const std::vector<LabeledNodule>& nodules, double train_frac,
                              std::uint64_t seed);

/// Same, over raw (scan_id, class index) pairs.
DatasetSplit split_stratified(const std::vector<std::pair<std::string, int>>& items, int n_classes,
                              double train_frac, std::uint64_t seed);

}  // namespace lungpipe
