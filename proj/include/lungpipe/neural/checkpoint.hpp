#pragma once

#include <filesystem>
#include <iosfwd>

#include "lungpipe/neural/model.hpp"

namespace lungpipe::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: 8-byte magic "LPCKPT\0\0", uint32 version, uint64 header
/// length, JSON header (architecture, input side, class order, training log,
/// tensor directory), then little-endian float64 tensor data.
void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path);
void write_checkpoint(const TrainedModel& m, std::ostream& out);

/// Throws IoError, FormatError (bad magic/version/header) or CorruptData
/// (tensor directory inconsistent with the architecture or truncated data).
TrainedModel load_checkpoint(const std::filesystem::path& path);
TrainedModel read_checkpoint(std::istream& in);

}  // namespace lungpipe::nn
