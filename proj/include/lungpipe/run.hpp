#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "lungpipe/config.hpp"

namespace lungpipe {

inline constexpr const char* kLungpipeVersion = "1.0.0";

/// Patient labels file: columns scan_id and cancer (0/1).
std::map<std::string, int> read_patient_labels(const std::filesystem::path& csv);

/// Scans (*.mhd) of a directory in name order, keyed by file stem.
std::map<std::string, std::filesystem::path> list_scans(const std::filesystem::path& dir);

struct RunResult {
  nlohmann::json report;
  nlohmann::json manifest;
  std::string report_hash;  // FNV-1a of the compact report
};

/// preprocess -> segment -> detect -> FP-reduce -> featurize -> classify ->
/// aggregate -> evaluate. Writes report.json and manifest.json into cfg.out.
/// Scan-level failures raise StageError after the completed scans are written
/// to report.json with status "failed".
RunResult run_end_to_end(const RunConfig& cfg);

/// Write the two-column cohort labels file.
void write_patient_labels(const std::map<std::string, int>& labels, const std::filesystem::path& csv);

}  // namespace lungpipe
