#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lungpipe/grid.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe {

/// MetaImage subset: NDims, DimSize, ElementSpacing, Offset, ElementType and
/// ElementDataFile (a sibling raw file or LOCAL). Only axis-aligned,
/// uncompressed, single-channel 3D images are accepted.
enum class ElementType { UChar, Char, UShort, Short, UInt, Int, Float, Double };

struct MetaHeader {
  Shape3 shape;  // (z,y,x); DimSize is stored x y z on disk
  Vec3 spacing;
  Vec3 origin;
  ElementType type = ElementType::Float;
  bool big_endian = false;
  std::string data_file;  // "LOCAL" for inline payload
};

/// Parse the key/value header. Throws FormatError on missing or malformed keys.
MetaHeader parse_meta_header(const std::string& text);

/// Load a scan; intensities converted to float HU.
CtVolume load_volume(const std::filesystem::path& path);

/// Write `<stem>.mhd` plus `<stem>.raw` (MET_FLOAT, little-endian).
void save_volume(const CtVolume& v, const std::filesystem::path& mhd_path);

struct LungMask;
LungMask load_mask(const std::filesystem::path& path);
/// Binary mask stored as MET_UCHAR with the source geometry.
void save_mask(const LungMask& m, const std::filesystem::path& mhd_path);

std::string element_type_name(ElementType t);
std::size_t element_size(ElementType t);

}  // namespace lungpipe
