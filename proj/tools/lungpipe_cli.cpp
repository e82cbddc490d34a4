#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lungpipe/annotations.hpp"
#include "lungpipe/config.hpp"
#include "lungpipe/csv.hpp"
#include "lungpipe/dataset.hpp"
#include "lungpipe/detection.hpp"
#include "lungpipe/error.hpp"
#include "lungpipe/evaluation.hpp"
#include "lungpipe/metaimage.hpp"
#include "lungpipe/neural/checkpoint.hpp"
#include "lungpipe/neural/train.hpp"
#include "lungpipe/phantom.hpp"
#include "lungpipe/run.hpp"
#include "lungpipe/segmentation.hpp"

using namespace lungpipe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

/// Stage commands take a partial config layered over the defaults.
RunConfig stage_config(const std::string& path) {
  json j = default_config_json();
  fs::path base;
  if (!path.empty()) {
    j.merge_patch(read_json_file(path));
    base = fs::path(path).parent_path();
  }
  return parse_config(j, base, false);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

CtVolume preprocess_scan(const fs::path& in, const RunConfig& c, CtVolume* hu_out = nullptr) {
  CtVolume raw = load_volume(in);
  raw.scan_id = in.stem().string();
  CtVolume hu = resample_isotropic(raw, {c.iso, c.iso, c.iso});
  hu.scan_id = raw.scan_id;
  CtVolume norm = clip_and_normalize(hu, c.clip_lo, c.clip_hi);
  if (hu_out) *hu_out = std::move(hu);
  return norm;
}

std::vector<RadiologistRead> read_annotations(const fs::path& p) {
  std::vector<RadiologistRead> reads;
  auto add_file = [&](const fs::path& f) {
    if (f.extension() == ".xml") {
      auto r = parse_lidc_xml_file(f);
      reads.insert(reads.end(), r.begin(), r.end());
    } else if (f.extension() == ".csv") {
      std::ifstream in(f);
      if (!in) throw IoError("cannot open " + f.string());
      auto r = parse_score_csv(in);
      reads.insert(reads.end(), r.begin(), r.end());
    }
  };
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add_file(f);
  } else {
    if (!fs::exists(p)) throw IoError("annotations not found: " + p.string());
    add_file(p);
  }
  return reads;
}

std::vector<std::pair<std::string, int>> subject_labels(const CubeDataset& ds) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& it : ds.items) out.emplace_back(it.subject_id, it.label);
  return out;
}

json train_and_save(const CubeDataset& ds, const nn::ArchitectureSpec& arch, const nn::TrainConfig& tc,
                    double val_fraction, std::uint64_t seed, const fs::path& out) {
  const auto split =
      split_stratified(subject_labels(ds), static_cast<int>(ds.class_order.size()), 1.0 - val_fraction, seed);
  std::vector<LabeledCube> train_set, val_set;
  for (const auto& it : ds.items) (split.in_train(it.subject_id) ? train_set : val_set).push_back(it);
  const int side = ds.items.empty() ? kCubeSide : static_cast<int>(ds.items[0].cube.values.shape().x);
  auto model = nn::build_model(arch, side, seed, ds.class_order);
  auto trained = nn::train(std::move(model), train_set, val_set, tc, [](const nn::EpochLog& e) {
    std::fprintf(stderr, "epoch %d train_loss %.4f val_loss %.4f val_acc %.3f\n", e.epoch, e.train_loss, e.val_loss,
                 e.val_accuracy);
  });
  nn::save_checkpoint(trained, out);
  json j{{"checkpoint", out.string()},
         {"train_items", train_set.size()},
         {"val_items", val_set.size()},
         {"best_epoch", trained.best_epoch},
         {"epochs_run", trained.training_log.size()},
         {"split_warnings", split.warnings},
         {"parameters", trained.parameter_count()}};
  if (!trained.training_log.empty()) {
    const auto& b = trained.training_log[static_cast<std::size_t>(std::max(trained.best_epoch, 0))];
    j["val_loss"] = b.val_loss;
    j["val_accuracy"] = b.val_accuracy;
  }
  return j;
}

std::string svg_curve(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<std::pair<double, double>>& pts, double xmax, double ymax) {
  const double W = 480, H = 360, L = 60, B = 50, T = 30, R = 20;
  auto sx = [&](double x) { return L + (W - L - R) * (xmax > 0 ? x / xmax : 0.0); };
  auto sy = [&](double y) { return H - B - (H - B - T) * (ymax > 0 ? y / ymax : 0.0); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
    << "</text>\n";
  s << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2
    << ")\" text-anchor=\"middle\" font-size=\"12\">" << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmax * i / 4, fy = ymax * i / 4;
    s << "<text x=\"" << sx(fx) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << fmt(fx) << "</text>\n";
    s << "<text x=\"" << L - 5 << "\" y=\"" << sy(fy) + 3 << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(fy)
      << "</text>\n";
  }
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : pts) s << sx(std::min(x, xmax)) << "," << sy(y) << " ";
  s << "\"/>\n</svg>\n";
  return s.str();
}

int cmd_preprocess(const std::string& in, const std::string& out, double lo, double hi, double iso) {
  CtVolume raw = load_volume(in);
  CtVolume r = resample_isotropic(raw, {iso, iso, iso});
  save_volume(clip_and_normalize(r, lo, hi), out);
  const auto& s = r.shape();
  std::cout << json{{"out", out}, {"shape", {s.z, s.y, s.x}}}.dump() << "\n";
  return 0;
}

int cmd_segment(const std::string& in, const std::string& out, const std::string& config) {
  const RunConfig c = stage_config(config);
  CtVolume raw = load_volume(in);
  CtVolume hu = resample_isotropic(raw, {c.iso, c.iso, c.iso});
  hu.scan_id = fs::path(in).stem().string();
  const LungMask m = segment_lungs(hu, c.segmentation);
  save_mask(m, out);
  std::cout << json{{"out", out}, {"lung_voxels", m.count()}}.dump() << "\n";
  return 0;
}

int cmd_detect(const std::string& scan, const std::string& mask_path, const std::string& config,
               const std::string& out) {
  const RunConfig c = stage_config(config);
  CtVolume hu;
  const CtVolume norm = preprocess_scan(scan, c, &hu);
  LungMask mask = mask_path.empty() ? segment_lungs(hu, c.segmentation) : load_mask(mask_path);
  if (!(mask.mask.shape() == norm.shape()))
    throw ValidationError("mask shape does not match the preprocessed scan");
  const auto cands = detect_candidates(norm, mask, c.detection);
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  write_csv_row(f, {"scan_id", "z", "y", "x", "radius_mm", "response", "power", "relative_z"});
  for (const auto& k : cands)
    write_csv_row(f, {norm.scan_id, fmt(k.center_world.z), fmt(k.center_world.y), fmt(k.center_world.x),
                      fmt(k.radius), fmt(k.response), fmt(k.power), fmt(k.relative_z)});
  std::cout << json{{"out", out}, {"candidates", cands.size()}}.dump() << "\n";
  return 0;
}

int cmd_build_dataset(const std::string& annotations, const std::string& reference, const std::string& scans,
                      const std::string& scheme, int min_reads, const std::string& out) {
  const auto reads = read_annotations(annotations);
  std::ifstream rin(reference);
  if (!rin) throw IoError("cannot open " + reference);
  const auto ref = parse_reference_csv(rin);
  const auto cons = consolidate(reads, ref, static_cast<std::size_t>(min_reads));
  const auto rep = build_malignancy_dataset(cons.annotations, parse_scheme(scheme), list_scans(scans));
  save_cube_dataset(rep.dataset, out);
  std::cout << json{{"out", out},
                    {"reads", reads.size()},
                    {"consolidated", cons.annotations.size()},
                    {"unmatched_reads", cons.unmatched.size()},
                    {"excluded", rep.excluded},
                    {"missing_scans", rep.missing_scans},
                    {"class_order", rep.dataset.class_order},
                    {"class_counts", rep.dataset.class_counts()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train_malignancy(const std::string& dataset, const std::string& scheme, const std::string& arch,
                         const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
                         std::optional<int> epochs, double val_fraction) {
  const RunConfig c = stage_config(config);
  const CubeDataset ds = load_cube_dataset(dataset);
  if (ds.class_order != scheme_class_names(parse_scheme(scheme)))
    throw ConfigError("dataset classes do not match scheme " + scheme);
  nn::ArchitectureSpec spec = c.malignancy.architecture;
  if (!arch.empty()) {
    const auto kind = nn::parse_arch_kind(arch);
    if (kind != spec.kind) {
      spec = kind == nn::ArchKind::Shallow ? nn::ArchitectureSpec::shallow()
             : kind == nn::ArchKind::Deeper ? nn::ArchitectureSpec::deeper()
                                            : nn::ArchitectureSpec::residual(10);
      if (kind == nn::ArchKind::Residual) {
        spec.output_kind = nn::OutputKind::Softmax;
        spec.n_outputs = 3;
      }
    }
  }
  nn::TrainConfig tc = c.malignancy.training;
  if (seed) tc.seed = *seed;
  if (epochs) tc.max_epochs = *epochs;
  tc.validate();
  std::cout << train_and_save(ds, spec, tc, val_fraction, tc.seed, out).dump() << "\n";
  return 0;
}

int cmd_train_fp(const std::string& candidates, const std::string& scans, const std::string& config,
                 const std::string& out, std::optional<std::uint64_t> seed, std::optional<int> epochs,
                 double val_fraction) {
  const RunConfig c = stage_config(config);
  const CubeDataset ds = build_candidate_dataset(read_candidate_csv(candidates), list_scans(scans));
  nn::TrainConfig tc = c.false_positive.training;
  if (seed) tc.seed = *seed;
  if (epochs) tc.max_epochs = *epochs;
  tc.validate();
  std::cout << train_and_save(ds, c.false_positive.architecture, tc, val_fraction, tc.seed, out).dump() << "\n";
  return 0;
}

int cmd_run_pipeline(const std::string& config, const std::string& scans, const std::string& labels,
                     const std::string& mode, const std::string& mal, const std::string& fp, const std::string& out,
                     std::optional<std::uint64_t> seed, const std::string& grids) {
  json j = config.empty() ? default_config_json() : read_json_file(config);
  const fs::path base = config.empty() ? fs::path() : fs::path(config).parent_path();
  const fs::path cwd = fs::current_path();
  auto abs = [&](const std::string& p) { return fs::absolute(cwd / p).lexically_normal().string(); };
  if (!scans.empty()) j["paths"]["scans"] = abs(scans);
  if (!labels.empty()) j["paths"]["labels"] = abs(labels);
  if (!mal.empty()) j["paths"]["mal_model"] = abs(mal);
  if (!fp.empty()) j["paths"]["fp_model"] = abs(fp);
  std::string report_name = "report.json";
  if (!out.empty()) {
    fs::path o = abs(out);
    if (o.extension() == ".json") {
      report_name = o.filename().string();
      o = o.parent_path();
    }
    j["paths"]["out"] = o.string();
  }
  if (!mode.empty()) j["integration"]["mode"] = mode;
  if (seed) j["seed"] = *seed;
  if (!grids.empty()) j["cv"]["grids"] = grids;
  RunConfig c = parse_config(j, base, true);
  c.report_name = report_name;
  const RunResult r = run_end_to_end(c);
  std::cout << json{{"report", (c.out / c.report_name).string()},
                    {"report_hash", r.report_hash},
                    {"patients", r.report["patients"].size()},
                    {"nodules", r.report["nodules"].size()},
                    {"best", r.report["cv"]["best"]},
                    {"evaluation", r.report["evaluation"]}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_evaluate(const std::string& pred, const std::string& truth, const std::string& reference,
                 const std::string& plot, const std::string& curves, double threshold) {
  const json report = read_json_file(pred);
  const auto labels = read_patient_labels(truth);
  std::vector<int> y, yhat;
  std::vector<double> score;
  std::vector<std::string> flagged;
  for (const auto& p : report.at("patients")) {
    const std::string id = p.at("patient_id");
    auto it = labels.find(id);
    if (it == labels.end()) throw ValidationError("no truth label for patient " + id);
    const double prob = p.at("probability");
    y.push_back(it->second);
    score.push_back(prob);
    yhat.push_back(prob >= threshold ? 1 : 0);
    if (p.contains("flags")) flagged.push_back(id);
  }
  json result;
  result["patients"] = weighted_metrics(y, yhat, {"non-cancer", "cancer"});
  result["no_nodules_detected"] = flagged;
  const PrCurve pr = pr_curve(y, score);
  result["average_precision"] = pr.average_precision;
  result["warnings"] = pr.warnings;

  std::vector<std::pair<double, double>> pr_pts;
  for (const auto& p : pr.points) pr_pts.emplace_back(p.recall, p.precision);
  std::sort(pr_pts.begin(), pr_pts.end());
  std::vector<FrocPoint> fc;
  if (!reference.empty()) {
    std::ifstream rin(reference);
    if (!rin) throw IoError("cannot open " + reference);
    std::vector<GroundTruthNodule> gt;
    for (const auto& r : parse_reference_csv(rin)) gt.push_back({r.scan_id, r.center_world, r.diameter_mm});
    std::vector<ScoredCandidate> sc;
    for (const auto& n : report.at("nodules")) {
      const auto& c = n.at("center_world");
      const double s = n.contains("fp_probability") ? n["fp_probability"].get<double>() : n.at("response").get<double>();
      sc.push_back({n.at("scan_id"), {c[0], c[1], c[2]}, s});
    }
    fc = froc(sc, gt, report.at("patients").size());
    result["froc_score"] = froc_score(fc);
    json pts = json::array();
    for (const auto& p : fc) pts.push_back({{"fp_per_scan", p.fp_per_scan}, {"sensitivity", p.sensitivity}});
    result["froc"] = pts;
  }
  if (!curves.empty()) {
    std::ofstream f(curves + "_pr.csv");
    if (!f) throw IoError("cannot write " + curves + "_pr.csv");
    write_csv_row(f, {"threshold", "precision", "recall"});
    for (const auto& p : pr.points) write_csv_row(f, {fmt(p.threshold), fmt(p.precision), fmt(p.recall)});
    if (!fc.empty()) {
      std::ofstream g(curves + "_froc.csv");
      write_csv_row(g, {"threshold", "fp_per_scan", "sensitivity"});
      for (const auto& p : fc) write_csv_row(g, {fmt(p.threshold), fmt(p.fp_per_scan), fmt(p.sensitivity)});
    }
  }
  if (!plot.empty()) {
    std::ofstream f(plot);
    if (!f) throw IoError("cannot write " + plot);
    if (!fc.empty()) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : fc) pts.emplace_back(p.fp_per_scan, p.sensitivity);
      f << svg_curve("FROC", "false positives per scan", "sensitivity", pts, 8.0, 1.0);
    } else {
      f << svg_curve("Precision-recall", "recall", "precision", pr_pts, 1.0, 1.0);
    }
  }
  std::cout << result.dump(2) << "\n";
  return 0;
}

int cmd_phantom(const std::string& spec_path, int cohort, int cubes, const std::string& separability,
                const std::string& scheme, std::uint64_t seed, const std::string& out) {
  fs::create_directories(out);
  if (!spec_path.empty()) {
    const PhantomSpec spec = read_json_file(spec_path).get<PhantomSpec>();
    const PhantomScan scan = generate_ct(spec, seed);
    save_volume(scan.volume, fs::path(out) / (spec.scan_id + ".mhd"));
    LungMask m;
    m.mask = scan.lung_mask;
    m.spacing = scan.volume.spacing;
    m.origin = scan.volume.origin;
    save_mask(m, fs::path(out) / (spec.scan_id + "_lungs.mhd"));
    std::cout << json{{"scan", (fs::path(out) / (spec.scan_id + ".mhd")).string()}, {"nodules", spec.nodules.size()}}
                     .dump()
              << "\n";
    return 0;
  }
  if (cubes > 0) {
    const Separability sep = separability == "size"      ? Separability::Size
                             : separability == "texture" ? Separability::Texture
                             : separability == "mixed"   ? Separability::Mixed
                                                         : throw ConfigError("unknown separability " + separability);
    const auto ds = generate_cube_dataset({cubes, cubes, cubes}, parse_scheme(scheme), sep, seed);
    save_cube_dataset(ds, out);
    std::cout << json{{"out", out}, {"items", ds.items.size()}, {"class_order", ds.class_order}}.dump() << "\n";
    return 0;
  }
  if (cohort <= 0) throw ConfigError("phantom needs --spec, --cohort N or --cubes N");
  const fs::path dir(out);
  fs::create_directories(dir / "scans");
  fs::create_directories(dir / "specs");
  std::map<std::string, int> labels;
  std::ofstream ref(dir / "reference.csv");
  write_csv_row(ref, {"seriesuid", "coordX", "coordY", "coordZ", "diameter_mm"});
  for (int i = 0; i < cohort; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "phantom_%04d", i);
    RandomPhantomOptions opts;
    opts.cancer = i % 2;
    const PhantomSpec spec = random_phantom_spec(opts, seed * 1000003ULL + static_cast<std::uint64_t>(i), id);
    const PhantomScan scan = generate_ct(spec, seed * 1000003ULL + static_cast<std::uint64_t>(i) + 7);
    save_volume(scan.volume, dir / "scans" / (std::string(id) + ".mhd"));
    write_json_file(spec, dir / "specs" / (std::string(id) + ".json"));
    labels[id] = spec.cancer;
    for (const auto& n : spec.nodules)
      write_csv_row(ref, {id, fmt(n.center.x), fmt(n.center.y), fmt(n.center.z), fmt(2.0 * n.radius)});
  }
  write_patient_labels(labels, dir / "labels.csv");
  std::cout << json{{"out", out}, {"scans", cohort}}.dump() << "\n";
  return 0;
}

void print_error(const std::string& kind, const std::string& message, json extra = json::object()) {
  json j{{"error", kind}, {"message", message}};
  j.update(extra);
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lungpipe: CT lung nodule detection and cancer classification"};
  app.require_subcommand(1);
  std::vector<std::function<int()>> actions;

  std::string in, out, config, mask, scan, scans, labels, mode, mal, fp;
  std::string annotations, reference, arch, dataset, candidates, pred, truth, plot, curves, spec, grids;
  std::string scheme = "145", separability = "size";
  double clip_lo = kDefaultClipLo, clip_hi = kDefaultClipHi, iso = 1.0, val_fraction = 0.2, threshold = 0.5;
  int min_reads = 3, cohort = 0, cubes = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::uint64_t phantom_seed = 0;

  auto* pre = app.add_subcommand("preprocess", "Resample to isotropic spacing, clip and normalize");
  pre->add_option("--in", in, "input scan (.mhd)")->required();
  pre->add_option("--out", out, "output scan (.mhd)")->required();
  pre->add_option("--clip-lo", clip_lo, "lower clip bound (HU)");
  pre->add_option("--clip-hi", clip_hi, "upper clip bound (HU)");
  pre->add_option("--iso", iso, "target spacing (mm)");
  pre->callback([&] { actions.push_back([&] { return cmd_preprocess(in, out, clip_lo, clip_hi, iso); }); });

  auto* seg = app.add_subcommand("segment", "Lung mask of a HU scan (resampled to the configured spacing)");
  seg->add_option("--in", in, "input scan (.mhd, HU)")->required();
  seg->add_option("--out", out, "output mask (.mhd)")->required();
  seg->add_option("--config", config, "config JSON (defaults otherwise)");
  seg->callback([&] { actions.push_back([&] { return cmd_segment(in, out, config); }); });

  auto* det = app.add_subcommand("detect", "Difference-of-Gaussian nodule candidates");
  det->add_option("--scan", scan, "input scan (.mhd, HU)")->required();
  det->add_option("--mask", mask, "lung mask (.mhd); segmented when omitted");
  det->add_option("--config", config, "config JSON");
  det->add_option("--out", out, "candidates CSV")->required();
  det->callback([&] { actions.push_back([&] { return cmd_detect(scan, mask, config, out); }); });

  auto* bd = app.add_subcommand("build-dataset", "Malignancy cube dataset from annotations");
  bd->add_option("--annotations", annotations, "XML/CSV file or directory")->required();
  bd->add_option("--reference", reference, "reference nodule CSV")->required();
  bd->add_option("--scans", scans, "scan directory")->required();
  bd->add_option("--scheme", scheme, "145 or 1and245");
  bd->add_option("--min-reads", min_reads, "readers required per nodule");
  bd->add_option("--out", out, "dataset directory")->required();
  bd->callback([&] {
    actions.push_back([&] { return cmd_build_dataset(annotations, reference, scans, scheme, min_reads, out); });
  });

  auto* tm = app.add_subcommand("train-malignancy", "Train a 3-class malignancy network");
  tm->add_option("--dataset", dataset, "dataset directory")->required();
  tm->add_option("--scheme", scheme, "145 or 1and245");
  tm->add_option("--arch", arch, "shallow, deeper or residual");
  tm->add_option("--config", config, "config JSON");
  tm->add_option("--out", out, "checkpoint path")->required();
  tm->add_option("--seed", seed, "training seed");
  tm->add_option("--epochs", epochs, "maximum epochs");
  tm->add_option("--val-fraction", val_fraction, "subject fraction held out for validation");
  tm->callback([&] {
    actions.push_back(
        [&] { return cmd_train_malignancy(dataset, scheme, arch, config, out, seed, epochs, val_fraction); });
  });

  auto* tf = app.add_subcommand("train-fp", "Train the false-positive reduction network");
  tf->add_option("--candidates", candidates, "labelled candidates CSV")->required();
  tf->add_option("--scans", scans, "scan directory")->required();
  tf->add_option("--config", config, "config JSON");
  tf->add_option("--out", out, "checkpoint path")->required();
  tf->add_option("--seed", seed, "training seed");
  tf->add_option("--epochs", epochs, "maximum epochs");
  tf->add_option("--val-fraction", val_fraction, "subject fraction held out for validation");
  tf->callback([&] {
    actions.push_back([&] { return cmd_train_fp(candidates, scans, config, out, seed, epochs, val_fraction); });
  });

  auto* rp = app.add_subcommand("run-pipeline", "End-to-end patient classification");
  rp->add_option("--config", config, "config JSON");
  rp->add_option("--scans", scans, "scan directory");
  rp->add_option("--labels", labels, "patient labels CSV");
  rp->add_option("--mode", mode, "baseline, class, prob or model");
  rp->add_option("--mal-model", mal, "malignancy checkpoint");
  rp->add_option("--fp-model", fp, "false-positive checkpoint");
  rp->add_option("--out", out, "report path (.json) or output directory");
  rp->add_option("--seed", seed, "run seed");
  rp->add_option("--grids", grids, "full or compact");
  rp->callback([&] {
    actions.push_back([&] { return cmd_run_pipeline(config, scans, labels, mode, mal, fp, out, seed, grids); });
  });

  auto* ev = app.add_subcommand("evaluate", "Patient metrics, PR and FROC curves of a report");
  ev->add_option("--pred", pred, "pipeline report JSON")->required();
  ev->add_option("--truth", truth, "patient labels CSV")->required();
  ev->add_option("--reference", reference, "reference nodule CSV (enables FROC)");
  ev->add_option("--plot", plot, "SVG output");
  ev->add_option("--curves", curves, "CSV prefix for curve point lists");
  ev->add_option("--threshold", threshold, "decision threshold");
  ev->callback(
      [&] { actions.push_back([&] { return cmd_evaluate(pred, truth, reference, plot, curves, threshold); }); });

  auto* ph = app.add_subcommand("phantom", "Synthetic scans, cohorts or cube datasets");
  ph->add_option("--spec", spec, "phantom spec JSON");
  ph->add_option("--cohort", cohort, "number of random scans");
  ph->add_option("--cubes", cubes, "cubes per class");
  ph->add_option("--separability", separability, "size, texture or mixed");
  ph->add_option("--scheme", scheme, "145 or 1and245");
  ph->add_option("--seed", phantom_seed, "seed");
  ph->add_option("--out", out, "output directory")->required();
  ph->callback([&] {
    actions.push_back([&] { return cmd_phantom(spec, cohort, cubes, separability, scheme, phantom_seed, out); });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }
  try {
    int rc = 0;
    for (auto& a : actions) rc = a();
    return rc;
  } catch (const StageError& e) {
    print_error(e.kind(), e.what(), {{"stage", e.stage()}, {"scan_id", e.scan_id()}, {"inner_kind", e.inner_kind()}});
  } catch (const DivergenceError& e) {
    print_error(e.kind(), e.what(), {{"epoch", e.epoch()}});
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
  }
  return 1;
}
