#include "lungpipe/neural/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "lungpipe/error.hpp"

namespace lungpipe::nn {

namespace {

constexpr char kMagic[8] = {'L', 'P', 'C', 'K', 'P', 'T', '\0', '\0'};

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw FormatError("checkpoint truncated in preamble");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double d : v) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d));
  }
}

void read_doubles(std::istream& in, std::vector<double>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw CorruptData("checkpoint tensor data truncated");
    }
  } else {
    for (double& d : v) d = std::bit_cast<double>(get_le<std::uint64_t>(in));
  }
}

}  // namespace

void write_checkpoint(const TrainedModel& m, std::ostream& out) {
  nlohmann::json header;
  header["format"] = "lungpipe-checkpoint";
  header["architecture"] = m.spec;
  header["input_side"] = m.input_side;
  header["class_order"] = m.class_order;
  header["seed"] = m.seed;
  header["best_epoch"] = m.best_epoch;
  header["training_log"] = nlohmann::json::array();
  for (const auto& e : m.training_log) {
    header["training_log"].push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_accuracy", e.val_accuracy}});
  }
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter* p : m.net.parameters()) {
    header["tensors"].push_back({{"name", p->name}, {"shape", p->value.shape}, {"offset", offset}, {"trainable", p->trainable}});
    offset += p->value.size();
  }
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : m.net.parameters()) write_doubles(out, p->value.data);
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(m, out);
}

TrainedModel read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a lungpipe checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(in);
  if (len > (1ULL << 30)) throw FormatError("checkpoint header length implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  TrainedModel m;
  try {
    m = build_model(header.at("architecture").get<ArchitectureSpec>(), header.at("input_side").get<int>(),
                    header.value("seed", std::uint64_t{0}), header.at("class_order").get<std::vector<std::string>>());
    m.best_epoch = header.value("best_epoch", -1);
    for (const auto& e : header.value("training_log", nlohmann::json::array())) {
      m.training_log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                                e.at("val_accuracy").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header incomplete: ") + e.what());
  }
  auto params = m.net.parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CorruptData("checkpoint lists " + std::to_string(tensors.size()) + " tensors, architecture has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<std::vector<std::size_t>>();
    if (name != params[i]->name || shape != params[i]->value.shape) {
      throw CorruptData("checkpoint tensor '" + name + "' " + shape_string(shape) + " does not match '" +
                        params[i]->name + "' " + shape_string(params[i]->value.shape));
    }
    read_doubles(in, params[i]->value.data);
  }
  return m;
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace lungpipe::nn
