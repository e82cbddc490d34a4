#include "lungpipe/config.hpp"

#include <fstream>
#include <set>

#include "lungpipe/error.hpp"
#include "lungpipe/hash.hpp"

namespace lungpipe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopKeys{"version", "seed", "paths", "preprocess", "segmentation", "detection",
                                     "fp_reduction", "integration", "cv", "malignancy", "false_positive"};

const json* find(const json& j, const std::string& dotted) {
  const json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

template <class T>
bool read_number(const json& j, const std::string& key, T& out, std::vector<std::string>& v) {
  const json* x = find(j, key);
  if (!x) return false;
  if (!x->is_number()) {
    v.push_back(key + ": must be a number");
    return false;
  }
  out = x->get<T>();
  return true;
}

bool read_string(const json& j, const std::string& key, std::string& out, std::vector<std::string>& v) {
  const json* x = find(j, key);
  if (!x || x->is_null()) return false;
  if (!x->is_string()) {
    v.push_back(key + ": must be a string");
    return false;
  }
  out = x->get<std::string>();
  return true;
}

/// Parses into `c`, appending violations; never throws.
void parse_into(const json& j, const fs::path& base, bool check_paths, RunConfig& c, std::vector<std::string>& v) {
  if (!j.is_object()) {
    v.push_back("<root>: config must be a JSON object");
    return;
  }
  for (const auto& [key, _] : j.items())
    if (!kTopKeys.count(key)) v.push_back(key + ": unknown key");

  if (!find(j, "version")) {
    v.push_back("version: required");
  } else if (!find(j, "version")->is_number_integer() || find(j, "version")->get<int>() != kConfigVersion) {
    v.push_back("version: must be " + std::to_string(kConfigVersion));
  }
  if (const json* s = find(j, "seed"); s && !(s->is_number_integer() && s->get<std::int64_t>() >= 0))
    v.push_back("seed: must be a non-negative integer");
  else if (s)
    c.seed = s->get<std::uint64_t>();

  std::string scans, labels, out, mal, fp;
  if (!read_string(j, "paths.scans", scans, v) && !find(j, "paths.scans")) v.push_back("paths.scans: required");
  if (!read_string(j, "paths.labels", labels, v) && !find(j, "paths.labels")) v.push_back("paths.labels: required");
  if (!read_string(j, "paths.out", out, v) && !find(j, "paths.out")) v.push_back("paths.out: required");
  read_string(j, "paths.mal_model", mal, v);
  read_string(j, "paths.fp_model", fp, v);
  if (!scans.empty()) c.scans = resolve(base, scans);
  if (!labels.empty()) c.labels = resolve(base, labels);
  if (!out.empty()) c.out = resolve(base, out);
  if (!mal.empty()) c.mal_model = resolve(base, mal);
  if (!fp.empty()) c.fp_model = resolve(base, fp);
  if (check_paths) {
    if (!c.scans.empty() && !fs::is_directory(c.scans))
      v.push_back("paths.scans: directory does not exist: " + c.scans.string());
    if (!c.labels.empty() && !fs::is_regular_file(c.labels))
      v.push_back("paths.labels: file does not exist: " + c.labels.string());
    if (!c.mal_model.empty() && !fs::is_regular_file(c.mal_model))
      v.push_back("paths.mal_model: file does not exist: " + c.mal_model.string());
    if (!c.fp_model.empty() && !fs::is_regular_file(c.fp_model))
      v.push_back("paths.fp_model: file does not exist: " + c.fp_model.string());
  }

  read_number(j, "preprocess.clip_lo", c.clip_lo, v);
  read_number(j, "preprocess.clip_hi", c.clip_hi, v);
  read_number(j, "preprocess.iso", c.iso, v);
  if (!(c.clip_lo < c.clip_hi)) v.push_back("preprocess.clip_lo: must be < preprocess.clip_hi");
  if (!(c.iso > 0.0)) v.push_back("preprocess.iso: must be > 0");

  read_number(j, "segmentation.threshold_hu", c.segmentation.threshold_hu, v);
  read_number(j, "segmentation.dilation_radius", c.segmentation.dilation_radius, v);
  if (c.segmentation.dilation_radius < 0) v.push_back("segmentation.dilation_radius: must be >= 0");

  read_number(j, "detection.d_min", c.detection.d_min, v);
  read_number(j, "detection.d_max", c.detection.d_max, v);
  read_number(j, "detection.steps", c.detection.steps, v);
  read_number(j, "detection.threshold", c.detection.threshold, v);
  read_number(j, "detection.overlap", c.detection.overlap, v);
  try {
    c.detection.validate();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    if (msg.rfind("dog.", 0) == 0) msg = "detection." + msg.substr(4);
    const auto sp = msg.find(' ');
    v.push_back(msg.substr(0, sp) + ":" + msg.substr(sp));
  }

  read_number(j, "fp_reduction.threshold", c.fp_threshold, v);
  if (!(c.fp_threshold >= 0.0 && c.fp_threshold <= 1.0)) v.push_back("fp_reduction.threshold: must lie in [0, 1]");

  std::string mode;
  if (!read_string(j, "integration.mode", mode, v)) {
    if (!find(j, "integration.mode")) v.push_back("integration.mode: required");
  } else {
    try {
      c.mode = parse_integration_mode(mode);
      if (c.mode != IntegrationMode::Baseline && c.mal_model.empty())
        v.push_back("paths.mal_model: required for integration mode " + to_string(c.mode));
    } catch (const ConfigError&) {
      v.push_back("integration.mode: must be one of baseline, class, prob, model");
    }
  }

  read_number(j, "cv.k", c.cv.k, v);
  if (c.cv.k < 2) v.push_back("cv.k: must be >= 2");
  read_string(j, "cv.grids", c.cv.grids, v);
  if (c.cv.grids != "full" && c.cv.grids != "compact") v.push_back("cv.grids: must be full or compact");
  read_number(j, "cv.decision_threshold", c.cv.decision_threshold, v);
  if (!(c.cv.decision_threshold >= 0.0 && c.cv.decision_threshold <= 1.0))
    v.push_back("cv.decision_threshold: must lie in [0, 1]");

  c.malignancy.architecture = nn::ArchitectureSpec::deeper();
  c.false_positive.architecture = nn::ArchitectureSpec::residual(10);
  c.false_positive.training.learning_rate = 1e-4;
  c.false_positive.training.batch_size = 32;
  c.false_positive.training.loss = nn::LossKind::BinaryCrossEntropy;
  c.false_positive.training.augmentation = nn::AugmentationConfig::false_positive();
  c.malignancy.training.augmentation = nn::AugmentationConfig::malignancy();
  for (const std::string net : {"malignancy", "false_positive"}) {
    NetworkRecipe& r = net == "malignancy" ? c.malignancy : c.false_positive;
    std::string scheme;
    if (read_string(j, net + ".scheme", scheme, v)) {
      try {
        r.scheme = parse_scheme(scheme);
      } catch (const ConfigError&) {
        v.push_back(net + ".scheme: must be 145 or 1and245");
      }
    }
    if (const json* a = find(j, net + ".architecture")) {
      try {
        r.architecture = a->get<nn::ArchitectureSpec>();
        r.architecture.validate();
      } catch (const Error& e) {
        v.push_back(net + ".architecture: " + e.what());
      } catch (const json::exception& e) {
        v.push_back(net + ".architecture: " + e.what());
      }
    }
    if (const json* t = find(j, net + ".training")) {
      try {
        r.training = t->get<nn::TrainConfig>();
        r.training.validate();
      } catch (const Error& e) {
        v.push_back(net + ".training: " + e.what());
      } catch (const json::exception& e) {
        v.push_back(net + ".training: " + e.what());
      }
    }
  }
}

}  // namespace

std::vector<ClassifierGrid> RunConfig::classifier_grids() const {
  return cv.grids == "compact" ? compact_grids() : table_s5_grids();
}

std::vector<std::string> validate_config(const json& j, const fs::path& base_dir, bool check_paths) {
  RunConfig c;
  std::vector<std::string> v;
  parse_into(j, base_dir, check_paths, c, v);
  return v;
}

RunConfig parse_config(const json& j, const fs::path& base_dir, bool check_paths) {
  RunConfig c;
  std::vector<std::string> v;
  parse_into(j, base_dir, check_paths, c, v);
  if (!v.empty()) {
    std::string msg = "invalid config:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  c.source = j;
  c.source["paths"]["scans"] = c.scans.string();
  c.source["paths"]["labels"] = c.labels.string();
  c.source["paths"]["out"] = c.out.string();
  if (!c.mal_model.empty()) c.source["paths"]["mal_model"] = c.mal_model.string();
  if (!c.fp_model.empty()) c.source["paths"]["fp_model"] = c.fp_model.string();
  return c;
}

RunConfig load_config(const fs::path& file, bool check_paths) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, file.parent_path(), check_paths);
}

json default_config_json() {
  json j;
  j["version"] = kConfigVersion;
  j["seed"] = 0;
  j["paths"] = {{"scans", "cohort/scans"}, {"labels", "cohort/labels.csv"}, {"out", "out"}};
  j["preprocess"] = {{"clip_lo", kDefaultClipLo}, {"clip_hi", kDefaultClipHi}, {"iso", 1.0}};
  j["segmentation"] = {{"threshold_hu", -320.0}, {"dilation_radius", 2}};
  const auto d = DogConfig::option3();
  j["detection"] = {{"d_min", d.d_min}, {"d_max", d.d_max}, {"steps", d.steps}, {"threshold", d.threshold},
                    {"overlap", d.overlap}};
  j["fp_reduction"] = {{"threshold", 0.5}};
  j["integration"] = {{"mode", "baseline"}};
  j["cv"] = {{"k", 5}, {"grids", "full"}, {"decision_threshold", 0.5}};

  nn::TrainConfig mal;
  mal.augmentation = nn::AugmentationConfig::malignancy();
  j["malignancy"] = {{"scheme", "145"}, {"architecture", nn::ArchitectureSpec::deeper()}, {"training", mal}};
  nn::TrainConfig fp;
  fp.learning_rate = 1e-4;
  fp.batch_size = 32;
  fp.loss = nn::LossKind::BinaryCrossEntropy;
  fp.augmentation = nn::AugmentationConfig::false_positive();
  j["false_positive"] = {{"architecture", nn::ArchitectureSpec::residual(10)}, {"training", fp}};
  return j;
}

std::string config_hash(const json& j) {
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

}  // namespace lungpipe
