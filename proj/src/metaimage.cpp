#include "lungpipe/metaimage.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

#include "lungpipe/error.hpp"
#include "lungpipe/segmentation.hpp"

namespace lungpipe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::vector<double> numbers(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& t : tokens(value)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw FormatError("header key " + key + " has a non-numeric value '" + t + "'");
    }
  }
  return out;
}

bool truthy(const std::string& v) {
  std::string l = v;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  return l == "true" || l == "1" || l == "yes";
}

ElementType parse_type(const std::string& name) {
  static const std::map<std::string, ElementType> kTypes = {
      {"MET_UCHAR", ElementType::UChar},   {"MET_CHAR", ElementType::Char},
      {"MET_USHORT", ElementType::UShort}, {"MET_SHORT", ElementType::Short},
      {"MET_UINT", ElementType::UInt},     {"MET_INT", ElementType::Int},
      {"MET_FLOAT", ElementType::Float},   {"MET_DOUBLE", ElementType::Double}};
  const auto it = kTypes.find(name);
  if (it == kTypes.end()) throw FormatError("unsupported ElementType '" + name + "'");
  return it->second;
}

struct RawImage {
  MetaHeader header;
  std::vector<char> payload;
};

RawImage read_metaimage(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header_text;
  std::string line;
  std::streampos payload_start = 0;
  while (std::getline(in, line)) {
    header_text += line + "\n";
    const auto eq = line.find('=');
    if (eq != std::string::npos && trim(line.substr(0, eq)) == "ElementDataFile") {
      payload_start = in.tellg();
      break;
    }
  }
  RawImage img{parse_meta_header(header_text), {}};
  const std::size_t expected = img.header.shape.count() * element_size(img.header.type);

  std::vector<char> bytes;
  if (img.header.data_file == "LOCAL") {
    in.clear();
    in.seekg(payload_start);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  } else {
    const auto raw_path = path.parent_path() / img.header.data_file;
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw IoError("cannot open data file " + raw_path.string());
    bytes.assign(std::istreambuf_iterator<char>(raw), std::istreambuf_iterator<char>());
  }
  if (bytes.size() != expected) {
    throw CorruptData("payload of " + path.string() + " holds " + std::to_string(bytes.size()) +
                      " bytes but the header declares " + std::to_string(expected));
  }
  if (img.header.big_endian != (std::endian::native == std::endian::big)) {
    const std::size_t w = element_size(img.header.type);
    for (std::size_t i = 0; i + w <= bytes.size(); i += w) std::reverse(&bytes[i], &bytes[i + w]);
  }
  img.payload = std::move(bytes);
  return img;
}

template <typename T>
void append_values(std::vector<float>& out, const std::vector<char>& payload) {
  const std::size_t n = payload.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, payload.data() + i * sizeof(T), sizeof(T));
    out[i] = static_cast<float>(v);
  }
}

std::vector<float> decode(const RawImage& img) {
  std::vector<float> out;
  switch (img.header.type) {
    case ElementType::UChar: append_values<std::uint8_t>(out, img.payload); break;
    case ElementType::Char: append_values<std::int8_t>(out, img.payload); break;
    case ElementType::UShort: append_values<std::uint16_t>(out, img.payload); break;
    case ElementType::Short: append_values<std::int16_t>(out, img.payload); break;
    case ElementType::UInt: append_values<std::uint32_t>(out, img.payload); break;
    case ElementType::Int: append_values<std::int32_t>(out, img.payload); break;
    case ElementType::Float: append_values<float>(out, img.payload); break;
    case ElementType::Double: append_values<double>(out, img.payload); break;
  }
  return out;
}

std::string fmt_xyz(const Vec3& v) {
  std::ostringstream s;
  s << std::setprecision(17) << v.x << ' ' << v.y << ' ' << v.z;
  return s.str();
}

void write_metaimage(const std::filesystem::path& mhd_path, const Shape3& shape,
                     const Vec3& spacing, const Vec3& origin, ElementType type,
                     const char* data, std::size_t bytes) {
  if constexpr (std::endian::native != std::endian::little) {
    throw IoError("MetaImage writer supports little-endian hosts only");
  }
  auto raw_path = mhd_path;
  raw_path.replace_extension(".raw");
  {
    std::ofstream hdr(mhd_path, std::ios::binary);
    if (!hdr) throw IoError("cannot write " + mhd_path.string());
    hdr << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
        << "Offset = " << fmt_xyz(origin) << "\n"
        << "ElementSpacing = " << fmt_xyz(spacing) << "\n"
        << "DimSize = " << shape.x << ' ' << shape.y << ' ' << shape.z << "\n"
        << "ElementType = " << element_type_name(type) << "\n"
        << "ElementDataFile = " << raw_path.filename().string() << "\n";
  }
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot write " + raw_path.string());
  raw.write(data, static_cast<std::streamsize>(bytes));
}

}  // namespace

std::string element_type_name(ElementType t) {
  switch (t) {
    case ElementType::UChar: return "MET_UCHAR";
    case ElementType::Char: return "MET_CHAR";
    case ElementType::UShort: return "MET_USHORT";
    case ElementType::Short: return "MET_SHORT";
    case ElementType::UInt: return "MET_UINT";
    case ElementType::Int: return "MET_INT";
    case ElementType::Float: return "MET_FLOAT";
    case ElementType::Double: return "MET_DOUBLE";
  }
  return "MET_FLOAT";
}

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::UChar:
    case ElementType::Char: return 1;
    case ElementType::UShort:
    case ElementType::Short: return 2;
    case ElementType::UInt:
    case ElementType::Int:
    case ElementType::Float: return 4;
    case ElementType::Double: return 8;
  }
  return 4;
}

MetaHeader parse_meta_header(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto require = [&](std::initializer_list<const char*> keys) -> std::pair<std::string, std::string> {
    for (const char* k : keys) {
      if (auto it = kv.find(k); it != kv.end()) return *it;
    }
    throw FormatError(std::string("header is missing required key ") + *keys.begin());
  };

  const auto [ndims_key, ndims_val] = require({"NDims"});
  const auto nd = numbers(ndims_key, ndims_val);
  if (nd.size() != 1 || nd[0] != 3.0) {
    throw FormatError("only 3-dimensional images are supported (NDims = " + ndims_val + ")");
  }
  auto triple = [&](std::initializer_list<const char*> keys) {
    const auto [key, value] = require(keys);
    const auto v = numbers(key, value);
    if (v.size() != 3) {
      throw FormatError("header key " + key + " must hold 3 values, found " + std::to_string(v.size()));
    }
    return v;
  };

  MetaHeader h;
  const auto dims = triple({"DimSize"});
  for (double d : dims) {
    if (d < 1.0 || d != std::floor(d)) throw FormatError("DimSize entries must be positive integers");
  }
  h.shape = {static_cast<std::int64_t>(dims[2]), static_cast<std::int64_t>(dims[1]),
             static_cast<std::int64_t>(dims[0])};
  const auto sp = triple({"ElementSpacing", "ElementSize"});
  if (sp[0] <= 0.0 || sp[1] <= 0.0 || sp[2] <= 0.0) {
    throw FormatError("ElementSpacing entries must be strictly positive");
  }
  h.spacing = {sp[2], sp[1], sp[0]};
  const auto off = triple({"Offset", "Origin", "Position"});
  h.origin = {off[2], off[1], off[0]};

  h.type = parse_type(require({"ElementType"}).second);
  h.data_file = require({"ElementDataFile"}).second;

  if (auto it = kv.find("ElementNumberOfChannels"); it != kv.end() && trim(it->second) != "1") {
    throw FormatError("multi-channel images are not supported");
  }
  if (auto it = kv.find("CompressedData"); it != kv.end() && truthy(it->second)) {
    throw FormatError("compressed payloads are not supported");
  }
  for (const char* key : {"TransformMatrix", "Rotation", "Orientation"}) {
    if (auto it = kv.find(key); it != kv.end()) {
      const auto m = numbers(key, it->second);
      const std::vector<double> identity = {1, 0, 0, 0, 1, 0, 0, 0, 1};
      if (m != identity) throw FormatError("non-identity orientation matrices are not supported");
    }
  }
  for (const char* key : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
    if (auto it = kv.find(key); it != kv.end()) h.big_endian = truthy(it->second);
  }
  return h;
}

CtVolume load_volume(const std::filesystem::path& path) {
  RawImage img = read_metaimage(path);
  CtVolume v;
  v.voxels = Grid3<float>(img.header.shape);
  v.voxels.storage() = decode(img);
  v.spacing = img.header.spacing;
  v.origin = img.header.origin;
  v.scan_id = path.stem().string();
  return v;
}

void save_volume(const CtVolume& v, const std::filesystem::path& mhd_path) {
  v.validate();
  const auto& data = v.voxels.storage();
  write_metaimage(mhd_path, v.shape(), v.spacing, v.origin, ElementType::Float,
                  reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
}

LungMask load_mask(const std::filesystem::path& path) {
  RawImage img = read_metaimage(path);
  const std::vector<float> values = decode(img);
  LungMask m;
  m.mask = Grid3<std::uint8_t>(img.header.shape);
  auto dst = m.mask.values();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = values[i] != 0.0f ? 1 : 0;
  m.spacing = img.header.spacing;
  m.origin = img.header.origin;
  m.scan_id = path.stem().string();
  return m;
}

void save_mask(const LungMask& m, const std::filesystem::path& mhd_path) {
  const auto& data = m.mask.storage();
  write_metaimage(mhd_path, m.mask.shape(), m.spacing, m.origin, ElementType::UChar,
                  reinterpret_cast<const char*>(data.data()), data.size());
}

}  // namespace lungpipe
