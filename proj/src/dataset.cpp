#include "lungpipe/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "lungpipe/csv.hpp"
#include "lungpipe/error.hpp"
#include "lungpipe/metaimage.hpp"

namespace lungpipe {

namespace fs = std::filesystem;

std::vector<int> CubeDataset::class_counts() const {
  std::vector<int> c(class_order.size(), 0);
  for (const auto& it : items)
    if (it.label >= 0 && static_cast<std::size_t>(it.label) < c.size()) c[it.label]++;
  return c;
}

void save_cube_dataset(const CubeDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "cubes");
  {
    std::ofstream cls(dir / "classes.txt");
    if (!cls) throw IoError("cannot write " + (dir / "classes.txt").string());
    for (const auto& c : ds.class_order) cls << c << "\n";
  }
  std::ofstream idx(dir / "index.csv");
  if (!idx) throw IoError("cannot write " + (dir / "index.csv").string());
  write_csv_row(idx, {"file", "label", "class", "subject_id", "z", "y", "x"});
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& it = ds.items[i];
    char name[32];
    std::snprintf(name, sizeof(name), "cubes/%06zu.mhd", i);
    CtVolume v;
    v.voxels = it.cube.values;
    const double half = it.cube.values.shape().x / 2;
    v.origin = it.cube.center_world - Vec3{half, half, half};
    v.scan_id = it.cube.scan_id;
    save_volume(v, dir / name);
    char coord[3][32];
    std::snprintf(coord[0], 32, "%.17g", it.cube.center_world.z);
    std::snprintf(coord[1], 32, "%.17g", it.cube.center_world.y);
    std::snprintf(coord[2], 32, "%.17g", it.cube.center_world.x);
    const std::string cls = it.label >= 0 && static_cast<std::size_t>(it.label) < ds.class_order.size()
                                ? ds.class_order[it.label]
                                : std::string();
    write_csv_row(idx, {name, std::to_string(it.label), cls, it.subject_id, coord[0], coord[1], coord[2]});
  }
}

CubeDataset load_cube_dataset(const fs::path& dir) {
  CubeDataset ds;
  std::ifstream cls(dir / "classes.txt");
  if (!cls) throw IoError("cannot open " + (dir / "classes.txt").string());
  for (std::string line; std::getline(cls, line);)
    if (!line.empty()) ds.class_order.push_back(line);
  std::ifstream idx(dir / "index.csv");
  if (!idx) throw IoError("cannot open " + (dir / "index.csv").string());
  const CsvTable t = read_csv(idx);
  const auto cf = t.column("file"), cl = t.column("label"), cs = t.column("subject_id");
  const auto cz = t.column("z"), cy = t.column("y"), cx = t.column("x");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.row_lines[r];
    LabeledCube item;
    const double label = csv_number(row[cl], line, "label");
    if (label < 0 || label >= static_cast<double>(ds.class_order.size()) || label != static_cast<int>(label))
      throw ParseError("index.csv line " + std::to_string(line) + ": label outside the class list");
    item.label = static_cast<int>(label);
    item.subject_id = row[cs];
    CtVolume v = load_volume(dir / row[cf]);
    item.cube.values = std::move(v.voxels);
    item.cube.scan_id = item.subject_id;
    item.cube.center_world = {csv_number(row[cz], line, "z"), csv_number(row[cy], line, "y"),
                              csv_number(row[cx], line, "x")};
    ds.items.push_back(std::move(item));
  }
  return ds;
}

CtVolume load_preprocessed(const fs::path& mhd, double clip_lo, double clip_hi) {
  CtVolume v = load_volume(mhd);
  v.scan_id = mhd.stem().string();
  CtVolume iso = resample_isotropic(v);
  iso.scan_id = v.scan_id;
  return clip_and_normalize(iso, clip_lo, clip_hi);
}

MalignancyDatasetReport build_malignancy_dataset(const std::vector<NoduleAnnotation>& annotations, Scheme scheme,
                                                 const std::map<std::string, fs::path>& scans) {
  MalignancyDatasetReport rep;
  rep.dataset.class_order = scheme_class_names(scheme);
  std::map<std::string, std::vector<const NoduleAnnotation*>> by_scan;
  for (const auto& a : annotations) by_scan[a.scan_id].push_back(&a);
  for (const auto& [scan, list] : by_scan) {
    auto it = scans.find(scan);
    if (it == scans.end()) {
      rep.missing_scans.push_back(scan);
      continue;
    }
    std::optional<CtVolume> vol;
    for (const auto* a : list) {
      const auto cls = assign_class(a->mean_score, scheme);
      if (!cls) {
        rep.excluded++;
        continue;
      }
      if (!vol) vol = load_preprocessed(it->second);
      LabeledCube item;
      item.cube = extract_cube(*vol, a->centroid_world);
      item.label = class_index(*cls);
      item.subject_id = scan;
      rep.dataset.items.push_back(std::move(item));
    }
  }
  return rep;
}

std::vector<LabeledLocation> read_candidate_csv(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  const CsvTable t = read_csv(in);
  auto pick = [&](const char* a, const char* b) { return t.has_column(a) ? t.column(a) : t.column(b); };
  const auto cid = pick("scan_id", "seriesuid");
  const auto cz = pick("z", "coordZ"), cy = pick("y", "coordY"), cx = pick("x", "coordX");
  const auto cl = pick("class", "label");
  std::vector<LabeledLocation> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.row_lines[r];
    LabeledLocation l;
    l.scan_id = row[cid];
    l.center_world = {csv_number(row[cz], line, "z"), csv_number(row[cy], line, "y"), csv_number(row[cx], line, "x")};
    const double c = csv_number(row[cl], line, "class");
    if (c != 0.0 && c != 1.0) throw ParseError("candidates line " + std::to_string(line) + ": class must be 0 or 1");
    l.label = static_cast<int>(c);
    out.push_back(l);
  }
  return out;
}

CubeDataset build_candidate_dataset(const std::vector<LabeledLocation>& locations,
                                    const std::map<std::string, fs::path>& scans) {
  CubeDataset ds;
  ds.class_order = {"non-nodule", "nodule"};
  std::map<std::string, std::vector<const LabeledLocation*>> by_scan;
  for (const auto& l : locations) by_scan[l.scan_id].push_back(&l);
  for (const auto& [scan, list] : by_scan) {
    auto it = scans.find(scan);
    if (it == scans.end()) throw IoError("no scan file for candidate scan " + scan);
    const CtVolume vol = load_preprocessed(it->second);
    for (const auto* l : list) {
      LabeledCube item;
      item.cube = extract_cube(vol, l->center_world);
      item.label = l->label;
      item.subject_id = scan;
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

}  // namespace lungpipe
