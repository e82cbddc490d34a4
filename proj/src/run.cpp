#include "lungpipe/run.hpp"

#include <algorithm>
#include <fstream>
#include <memory>

#include "lungpipe/csv.hpp"
#include "lungpipe/detection.hpp"
#include "lungpipe/error.hpp"
#include "lungpipe/evaluation.hpp"
#include "lungpipe/hash.hpp"
#include "lungpipe/metaimage.hpp"
#include "lungpipe/neural/checkpoint.hpp"
#include "lungpipe/pipeline.hpp"
#include "lungpipe/segmentation.hpp"
#include "lungpipe/volume.hpp"

namespace lungpipe {

using nlohmann::json;
namespace fs = std::filesystem;

std::map<std::string, int> read_patient_labels(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open labels file " + csv.string());
  const CsvTable t = read_csv(in);
  const auto id_col = t.column("scan_id");
  const auto label_col = t.column("cancer");
  std::map<std::string, int> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double v = csv_number(t.rows[r][label_col], t.row_lines[r], "cancer");
    if (v != 0.0 && v != 1.0)
      throw ValidationError("labels line " + std::to_string(t.row_lines[r]) + ": cancer must be 0 or 1");
    if (!out.emplace(t.rows[r][id_col], static_cast<int>(v)).second)
      throw ValidationError("labels line " + std::to_string(t.row_lines[r]) + ": duplicate scan_id " +
                            t.rows[r][id_col]);
  }
  return out;
}

void write_patient_labels(const std::map<std::string, int>& labels, const fs::path& csv) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  write_csv_row(out, {"scan_id", "cancer"});
  for (const auto& [id, c] : labels) write_csv_row(out, {id, std::to_string(c)});
}

std::map<std::string, fs::path> list_scans(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".mhd") out[e.path().stem().string()] = e.path();
  return out;
}

namespace {

struct Nodule {
  std::string id;
  std::string scan_id;
  NoduleCandidate candidate;
  double fp_probability = -1.0;
  FeatureVector features;
  int label = 0;
};

struct ScanOutcome {
  std::string scan_id;
  int label = 0;
  std::string content_hash;
  std::size_t raw_candidates = 0;
  std::vector<Nodule> nodules;
};

std::string volume_hash(const CtVolume& v) {
  Fnv1a h;
  const auto& s = v.shape();
  const std::int64_t dims[3] = {s.z, s.y, s.x};
  const double geo[6] = {v.spacing.z, v.spacing.y, v.spacing.x, v.origin.z, v.origin.y, v.origin.x};
  h.update(dims, sizeof(dims));
  h.update(geo, sizeof(geo));
  h.update(v.voxels.storage().data(), v.voxels.size() * sizeof(float));
  return h.hex();
}

json nodule_json(const Nodule& n, double oof, int fold) {
  json j;
  j["nodule_id"] = n.id;
  j["scan_id"] = n.scan_id;
  const auto& c = n.candidate;
  j["center_world"] = {c.center_world.z, c.center_world.y, c.center_world.x};
  j["center_index"] = {c.center_index.z, c.center_index.y, c.center_index.x};
  j["radius"] = c.radius;
  j["response"] = c.response;
  j["power"] = c.power;
  j["relative_z"] = c.relative_z;
  if (n.fp_probability >= 0.0) j["fp_probability"] = n.fp_probability;
  j["features"] = n.features.values;
  j["label"] = n.label;
  j["probability"] = oof;
  j["fold"] = fold;
  return j;
}

void write_json(const json& j, const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

class Runner {
 public:
  explicit Runner(const RunConfig& cfg) : cfg_(cfg) {}

  RunResult run() {
    if (cfg_.mode != IntegrationMode::Baseline && cfg_.mal_model.empty())
      throw ConfigError("paths.mal_model: required for integration mode " + to_string(cfg_.mode));
    const auto labels = read_patient_labels(cfg_.labels);
    const auto scans = list_scans(cfg_.scans);
    if (scans.empty()) throw ConfigError("paths.scans: no .mhd scans in " + cfg_.scans.string());
    for (const auto& [id, _] : scans)
      if (!labels.count(id)) throw ConfigError("paths.labels: no label for scan " + id);
    load_models();
    fs::create_directories(cfg_.out);

    for (const auto& [id, path] : scans) outcomes_.push_back(process_scan(id, path, labels.at(id)));
    try {
      return finish();
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      fail("classify", "*", e.kind(), e.what());
    }
    return {};
  }

 private:
  void load_models() {
    if (cfg_.mode != IntegrationMode::Baseline) {
      mal_ = std::make_shared<nn::TrainedModel>(nn::load_checkpoint(cfg_.mal_model));
      if (!mal_->softmax() && cfg_.mode == IntegrationMode::Model)
        throw IntegrationError("transfer learning needs a softmax malignancy network; got a sigmoid head");
      if ((cfg_.mode == IntegrationMode::Class || cfg_.mode == IntegrationMode::Probability) &&
          mal_->spec.n_outputs != 3)
        throw IntegrationError("integration mode " + to_string(cfg_.mode) + " needs a 3-class malignancy network");
    }
    if (!cfg_.fp_model.empty()) {
      fp_ = std::make_shared<nn::TrainedModel>(nn::load_checkpoint(cfg_.fp_model));
      if (fp_->softmax()) throw IntegrationError("false-positive network must have a sigmoid head");
    }
  }

  [[noreturn]] void fail(const std::string& stage, const std::string& scan, const std::string& kind,
                         const std::string& msg) {
    json partial = base_report();
    partial["status"] = "failed";
    partial["error"] = {{"stage", stage}, {"scan_id", scan}, {"kind", kind}, {"message", msg}};
    json nodules = json::array();
    for (const auto& o : outcomes_)
      for (const auto& n : o.nodules) nodules.push_back(nodule_json(n, -1.0, -1));
    partial["nodules"] = nodules;
    try {
      write_json(partial, cfg_.out / cfg_.report_name);
    } catch (const Error&) {
    }
    throw StageError(stage, scan, kind, stage + " failed for scan " + scan + ": " + kind + ": " + msg);
  }

  ScanOutcome process_scan(const std::string& id, const fs::path& path, int label) {
    ScanOutcome o;
    o.scan_id = id;
    o.label = label;
    std::string stage = "load";
    try {
      CtVolume raw = load_volume(path);
      raw.scan_id = id;
      o.content_hash = volume_hash(raw);
      stage = "preprocess";
      CtVolume hu = resample_isotropic(raw, {cfg_.iso, cfg_.iso, cfg_.iso});
      hu.scan_id = id;
      const CtVolume norm = clip_and_normalize(hu, cfg_.clip_lo, cfg_.clip_hi);
      stage = "segment";
      LungMask mask = segment_lungs(hu, cfg_.segmentation);
      stage = "detect";
      const auto candidates = detect_candidates(norm, mask, cfg_.detection);
      o.raw_candidates = candidates.size();
      int idx = 0;
      for (const auto& c : candidates) {
        Nodule n;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "_c%03d", idx++);
        n.id = id + buf;
        n.scan_id = id;
        n.candidate = c;
        n.label = label;
        o.nodules.push_back(std::move(n));
      }
      std::vector<VoxelCube> cubes;
      if (fp_ || mal_) {
        stage = "extract";
        for (const auto& n : o.nodules) cubes.push_back(extract_cube(norm, n.candidate.center_world));
      }
      if (fp_) {
        stage = "fp_reduce";
        std::vector<Nodule> kept;
        std::vector<VoxelCube> kept_cubes;
        for (std::size_t i = 0; i < o.nodules.size(); ++i) {
          o.nodules[i].fp_probability = nn::predict_proba(*fp_, cubes[i]).at(0);
          if (o.nodules[i].fp_probability >= cfg_.fp_threshold) {
            kept.push_back(std::move(o.nodules[i]));
            kept_cubes.push_back(std::move(cubes[i]));
          }
        }
        o.nodules = std::move(kept);
        cubes = std::move(kept_cubes);
      }
      stage = "featurize";
      for (std::size_t i = 0; i < o.nodules.size(); ++i) {
        if (mal_) {
          const auto mal = malignancy_output(*mal_, cubes[i], cfg_.mode == IntegrationMode::Model);
          o.nodules[i].features = make_features(o.nodules[i].candidate, &mal, cfg_.mode);
        } else {
          o.nodules[i].features = make_features(o.nodules[i].candidate, nullptr, cfg_.mode);
        }
      }
    } catch (const Error& e) {
      fail(stage, id, e.kind(), e.what());
    } catch (const std::exception& e) {
      fail(stage, id, "InternalError", e.what());
    }
    return o;
  }

  json base_report() const {
    json r;
    r["version"] = kConfigVersion;
    r["lungpipe_version"] = kLungpipeVersion;
    r["mode"] = to_string(cfg_.mode);
    r["seed"] = cfg_.seed;
    r["status"] = "ok";
    return r;
  }

  RunResult finish() {
    ml::Matrix X;
    std::vector<int> y;
    std::vector<std::string> groups;
    std::vector<const Nodule*> all;
    for (const auto& o : outcomes_)
      for (const auto& n : o.nodules) {
        X.push_back(n.features.values);
        y.push_back(n.label);
        groups.push_back(n.scan_id);
        all.push_back(&n);
      }
    if (X.empty()) throw DataError("no candidates detected in any scan");
    const auto grids = cfg_.mode == IntegrationMode::Model
                           ? std::vector<ClassifierGrid>{dense_head_grid(static_cast<int>(X[0].size()))}
                           : cfg_.classifier_grids();
    const CvResult cv = grid_search_cv(X, y, groups, grids, cfg_.cv.k, cfg_.seed);

    json report = base_report();
    report["feature_schema"] = all.front()->features.schema;
    json nodules = json::array();
    std::map<std::string, std::vector<std::pair<std::string, double>>> per_patient;
    for (std::size_t i = 0; i < all.size(); ++i) {
      nodules.push_back(nodule_json(*all[i], cv.oof_probability[i], cv.fold_of[i]));
      per_patient[all[i]->scan_id].emplace_back(all[i]->id, cv.oof_probability[i]);
    }
    report["nodules"] = nodules;

    json patients = json::array();
    std::vector<int> truth, pred;
    for (const auto& o : outcomes_) {
      const auto p = aggregate_patient(per_patient[o.scan_id], o.scan_id, cfg_.cv.decision_threshold);
      json pj{{"patient_id", p.patient_id},
              {"probability", p.probability},
              {"label", p.label},
              {"truth", o.label},
              {"contributing_nodule", p.contributing_nodule},
              {"raw_candidates", o.raw_candidates},
              {"candidates", o.nodules.size()}};
      if (p.no_nodules) pj["flags"] = {"NoNodulesDetected"};
      patients.push_back(pj);
      truth.push_back(o.label);
      pred.push_back(p.label);
    }
    report["patients"] = patients;

    json table = json::array();
    for (std::size_t i = 0; i < cv.table.size(); ++i) {
      const auto& s = cv.table[i];
      table.push_back({{"family", s.family},
                       {"params", s.params},
                       {"precision", format_mean_std(s.mean_precision, s.std_precision)},
                       {"recall", format_mean_std(s.mean_recall, s.std_recall)},
                       {"f1", s.f1_report()},
                       {"mean_f1", s.mean_f1},
                       {"std_f1", s.std_f1},
                       {"fold_f1", s.fold_f1}});
    }
    const auto& best = cv.best_score();
    report["cv"] = {{"k", cv.k},
                    {"table", table},
                    {"best", {{"index", cv.best}, {"family", best.family}, {"params", best.params},
                              {"f1", best.f1_report()}, {"mean_f1", best.mean_f1}}}};
    report["evaluation"] = weighted_metrics(truth, pred, {"non-cancer", "cancer"});

    RunResult res;
    res.report = report;
    Fnv1a h;
    h.update(report.dump());
    res.report_hash = h.hex();

    json inputs = json::object();
    for (const auto& o : outcomes_) inputs[o.scan_id] = o.content_hash;
    json models = json::object();
    if (mal_) models["malignancy"] = {{"path", cfg_.mal_model.string()}, {"weights_hash", hex(nn::weights_hash(*mal_))}};
    if (fp_) models["false_positive"] = {{"path", cfg_.fp_model.string()}, {"weights_hash", hex(nn::weights_hash(*fp_))}};
    res.manifest = {{"lungpipe_version", kLungpipeVersion},
                    {"config_version", kConfigVersion},
                    {"config", cfg_.source},
                    {"config_hash", config_hash(cfg_.source)},
                    {"seeds", {{"run", cfg_.seed}, {"cv", cfg_.seed}}},
                    {"inputs", inputs},
                    {"labels", cfg_.labels.string()},
                    {"models", models},
                    {"report_hash", res.report_hash}};
    write_json(res.report, cfg_.out / cfg_.report_name);
    write_json(res.manifest, cfg_.out / "manifest.json");
    return res;
  }

  static std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }

  const RunConfig& cfg_;
  std::shared_ptr<nn::TrainedModel> mal_, fp_;
  std::vector<ScanOutcome> outcomes_;
};

}  // namespace

RunResult run_end_to_end(const RunConfig& cfg) { return Runner(cfg).run(); }

}  // namespace lungpipe
