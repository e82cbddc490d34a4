#include "lungpipe/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "lungpipe/csv.hpp"
#include "lungpipe/error.hpp"

namespace lungpipe {

namespace pt = boost::property_tree;

namespace {

double xml_number(const pt::ptree& node, const std::string& key, const std::string& context) {
  const auto child = node.get_child_optional(key);
  if (!child) throw ParseError(context + ": missing <" + key + ">");
  const std::string text = child->get_value<std::string>();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (text.find_first_not_of(" \t\r\n", used) != std::string::npos) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError(context + ": <" + key + "> is not a number: '" + text + "'");
  }
}

struct ImageGeometry {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double spacing_x = 1.0;
  double spacing_y = 1.0;
};

std::string session_reader(const pt::ptree& session, std::size_t index) {
  const auto id = session.get_optional<std::string>("servicingRadiologistID");
  if (id && !id->empty()) return *id;
  return "reader_" + std::to_string(index + 1);
}

}  // namespace

std::vector<RadiologistRead> parse_lidc_xml(std::string_view document) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(document)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("XML line " + std::to_string(e.line()) + ": " + e.message());
  }
  if (tree.empty()) throw ParseError("XML document has no root element");
  const auto& root = tree.front().second;
  const std::string root_name = tree.front().first;

  std::string scan_id = root.get<std::string>("ResponseHeader.SeriesInstanceUid", "");
  if (scan_id.empty()) scan_id = root.get<std::string>("scanID", "");
  if (scan_id.empty()) throw ParseError(root_name + ": missing ResponseHeader/SeriesInstanceUid");

  ImageGeometry geo;
  if (const auto g = root.get_child_optional("imageGeometry")) {
    geo.origin_x = xml_number(*g, "originX", root_name + "/imageGeometry");
    geo.origin_y = xml_number(*g, "originY", root_name + "/imageGeometry");
    geo.spacing_x = xml_number(*g, "pixelSpacingX", root_name + "/imageGeometry");
    geo.spacing_y = xml_number(*g, "pixelSpacingY", root_name + "/imageGeometry");
  }

  std::vector<RadiologistRead> reads;
  std::size_t session_index = 0;
  for (const auto& [name, session] : root) {
    if (name != "readingSession") continue;
    const std::string reader = session_reader(session, session_index);
    std::size_t nodule_index = 0;
    for (const auto& [nname, nodule] : session) {
      if (nname != "unblindedReadNodule") continue;
      const std::string context = "readingSession[" + std::to_string(session_index) +
                                  "]/unblindedReadNodule[" + std::to_string(nodule_index++) + "]";
      const std::string nodule_id = nodule.get<std::string>("noduleID", "");
      if (nodule_id.empty()) throw ParseError(context + ": missing <noduleID>");
      const auto chars = nodule.get_child_optional("characteristics");
      if (!chars || !chars->get_child_optional("malignancy")) continue;
      const double m = xml_number(*chars, "malignancy", context + "/characteristics");
      if (m != std::floor(m) || m < 1.0 || m > 5.0) {
        throw ValidationError(context + " (" + nodule_id + "): malignancy " + std::to_string(m) +
                              " outside 1..5");
      }
      Vec3 sum;
      std::size_t n = 0;
      std::size_t roi_index = 0;
      for (const auto& [rname, roi] : nodule) {
        if (rname != "roi") continue;
        const std::string rctx = context + "/roi[" + std::to_string(roi_index++) + "]";
        const double z = xml_number(roi, "imageZposition", rctx);
        for (const auto& [ename, edge] : roi) {
          if (ename != "edgeMap") continue;
          const double px = xml_number(edge, "xCoord", rctx + "/edgeMap");
          const double py = xml_number(edge, "yCoord", rctx + "/edgeMap");
          sum = sum + Vec3{z, geo.origin_y + py * geo.spacing_y, geo.origin_x + px * geo.spacing_x};
          ++n;
        }
      }
      if (n == 0) throw ParseError(context + ": nodule has no edgeMap points");
      reads.push_back({scan_id, reader, nodule_id, sum * (1.0 / static_cast<double>(n)),
                       static_cast<int>(m)});
    }
    ++session_index;
  }
  return reads;
}

std::vector<RadiologistRead> parse_lidc_xml_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_lidc_xml(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<RadiologistRead> parse_score_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  const auto cs = t.column("scan_id"), cr = t.column("reader_id"), cz = t.column("z"), cy = t.column("y"),
             cx = t.column("x"), cm = t.column("malignancy");
  const bool has_id = t.has_column("nodule_id");
  const std::size_t cn = has_id ? t.column("nodule_id") : 0;
  std::vector<RadiologistRead> reads;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::size_t line = t.row_lines[i];
    const double m = csv_number(r[cm], line, "malignancy");
    if (m != std::floor(m) || m < 1.0 || m > 5.0) {
      throw ValidationError("line " + std::to_string(line) + ": malignancy outside 1..5");
    }
    RadiologistRead read;
    read.scan_id = r[cs];
    read.reader_id = r[cr];
    read.nodule_id = has_id ? r[cn] : "row_" + std::to_string(i + 1);
    read.centroid_world = {csv_number(r[cz], line, "z"), csv_number(r[cy], line, "y"),
                           csv_number(r[cx], line, "x")};
    read.malignancy = static_cast<int>(m);
    reads.push_back(std::move(read));
  }
  return reads;
}

std::vector<ReferenceNodule> parse_reference_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  const auto cs = t.column("seriesuid"), cx = t.column("coordX"), cy = t.column("coordY"),
             cz = t.column("coordZ"), cd = t.column("diameter_mm");
  std::vector<ReferenceNodule> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::size_t line = t.row_lines[i];
    ReferenceNodule n;
    n.scan_id = r[cs];
    n.center_world = {csv_number(r[cz], line, "coordZ"), csv_number(r[cy], line, "coordY"),
                      csv_number(r[cx], line, "coordX")};
    n.diameter_mm = csv_number(r[cd], line, "diameter_mm");
    if (!(n.diameter_mm > 0.0)) throw ValidationError("line " + std::to_string(line) + ": diameter must be positive");
    out.push_back(std::move(n));
  }
  return out;
}

Consolidation consolidate(const std::vector<RadiologistRead>& reads,
                          const std::vector<ReferenceNodule>& reference, std::size_t min_reads) {
  std::map<std::string, std::vector<std::size_t>> by_scan;
  for (std::size_t i = 0; i < reference.size(); ++i) by_scan[reference[i].scan_id].push_back(i);

  // Per reference nodule and reader: the closest read (distance, then nodule id, reader id).
  struct Best {
    double distance;
    const RadiologistRead* read;
  };
  std::vector<std::map<std::string, Best>> matched(reference.size());
  Consolidation out;
  for (const auto& read : reads) {
    const auto it = by_scan.find(read.scan_id);
    std::size_t best_ref = reference.size();
    double best_d = 0.0;
    if (it != by_scan.end()) {
      for (std::size_t ref : it->second) {
        const double d = distance(read.centroid_world, reference[ref].center_world);
        if (d < reference[ref].diameter_mm / 2.0 && (best_ref == reference.size() || d < best_d)) {
          best_ref = ref;
          best_d = d;
        }
      }
    }
    if (best_ref == reference.size()) {
      out.unmatched.push_back(read);
      continue;
    }
    auto& slot = matched[best_ref];
    const auto existing = slot.find(read.reader_id);
    if (existing == slot.end()) {
      slot.emplace(read.reader_id, Best{best_d, &read});
    } else {
      const Best& cur = existing->second;
      const bool closer = best_d < cur.distance ||
                          (best_d == cur.distance && read.nodule_id < cur.read->nodule_id) ||
                          (best_d == cur.distance && read.nodule_id == cur.read->nodule_id &&
                           read.malignancy < cur.read->malignancy);
      if (closer) existing->second = Best{best_d, &read};
    }
  }
  for (std::size_t ref = 0; ref < reference.size(); ++ref) {
    if (matched[ref].size() < min_reads) continue;
    NoduleAnnotation a;
    a.scan_id = reference[ref].scan_id;
    a.centroid_world = reference[ref].center_world;
    a.diameter_mm = reference[ref].diameter_mm;
    int total = 0;
    for (const auto& [reader, best] : matched[ref]) {
      a.readers.push_back(reader);
      a.scores.push_back(best.read->malignancy);
      total += best.read->malignancy;
    }
    a.mean_score = static_cast<double>(total) / static_cast<double>(a.scores.size());
    out.annotations.push_back(std::move(a));
  }
  return out;
}

std::string to_string(Scheme s) { return s == Scheme::S145 ? "145" : "1and245"; }

Scheme parse_scheme(std::string_view s) {
  if (s == "145") return Scheme::S145;
  if (s == "1and245" || s == "1&245") return Scheme::S1and245;
  throw ConfigError("unknown scheme '" + std::string(s) + "' (expected 145 or 1and245)");
}

std::string to_string(MalignancyClass c) {
  switch (c) {
    case MalignancyClass::C1: return "1";
    case MalignancyClass::C1and2: return "1&2";
    case MalignancyClass::C4: return "4";
    case MalignancyClass::C5: return "5";
  }
  return "?";
}

std::vector<MalignancyClass> scheme_classes(Scheme s) {
  if (s == Scheme::S145) return {MalignancyClass::C1, MalignancyClass::C4, MalignancyClass::C5};
  return {MalignancyClass::C1and2, MalignancyClass::C4, MalignancyClass::C5};
}

std::vector<std::string> scheme_class_names(Scheme s) {
  std::vector<std::string> out;
  for (auto c : scheme_classes(s)) out.push_back(to_string(c));
  return out;
}

std::optional<MalignancyClass> assign_class(double mean_score, Scheme scheme) {
  if (!(mean_score >= 1.0 && mean_score <= 5.0)) {
    throw ValidationError("mean malignancy score " + std::to_string(mean_score) + " outside [1, 5]");
  }
  const int r = static_cast<int>(std::floor(mean_score + 0.5));
  switch (r) {
    case 1: return scheme == Scheme::S145 ? MalignancyClass::C1 : MalignancyClass::C1and2;
    case 2:
      if (scheme == Scheme::S1and245) return MalignancyClass::C1and2;
      return std::nullopt;
    case 4: return MalignancyClass::C4;
    case 5: return MalignancyClass::C5;
    default: return std::nullopt;
  }
}

namespace {

double split_error(const std::vector<std::vector<double>>& cur, const std::vector<std::vector<double>>& target) {
  double e = 0.0;
  for (std::size_t s = 0; s < cur.size(); ++s) {
    for (std::size_t c = 0; c < cur[s].size(); ++c) e += std::abs(cur[s][c] - target[s][c]);
  }
  return e;
}

}  // namespace

std::vector<int> assign_groups_stratified(const std::vector<GroupCounts>& groups,
                                          const std::vector<double>& fractions, std::uint64_t seed) {
  if (fractions.empty()) throw ConfigError("at least one split side is required");
  const double fsum = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  }
  if (!(fsum > 0.0)) throw ConfigError("split fractions must not all be zero");
  const std::size_t n_sides = fractions.size();
  std::size_t n_classes = 0;
  for (const auto& g : groups) n_classes = std::max(n_classes, g.counts.size());

  std::vector<double> totals(n_classes, 0.0);
  for (const auto& g : groups) {
    for (std::size_t c = 0; c < g.counts.size(); ++c) totals[c] += g.counts[c];
  }
  std::vector<std::vector<double>> target(n_sides, std::vector<double>(n_classes));
  for (std::size_t s = 0; s < n_sides; ++s) {
    for (std::size_t c = 0; c < n_classes; ++c) target[s][c] = fractions[s] / fsum * totals[c];
  }
  auto count = [&](std::size_t g, std::size_t c) {
    return c < groups[g].counts.size() ? static_cast<double>(groups[g].counts[c]) : 0.0;
  };

  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> group_total(groups.size(), 0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t c = 0; c < n_classes; ++c) group_total[g] += count(g, c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return group_total[a] > group_total[b]; });

  const double grand_total = std::accumulate(group_total.begin(), group_total.end(), 0.0);
  std::vector<std::vector<double>> cur(n_sides, std::vector<double>(n_classes, 0.0));
  std::vector<double> side_total(n_sides, 0.0);
  std::vector<int> side(groups.size(), 0);
  // Change in error when group g is added (+1) or removed (-1) from side s.
  auto delta = [&](std::size_t g, std::size_t s, double sign) {
    double d = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double v = count(g, c);
      if (v == 0.0) continue;
      d += std::abs(cur[s][c] + sign * v - target[s][c]) - std::abs(cur[s][c] - target[s][c]);
    }
    return d;
  };
  for (std::size_t g : order) {
    std::size_t best = 0;
    double best_d = 0.0, best_room = 0.0;
    for (std::size_t s = 0; s < n_sides; ++s) {
      const double d = delta(g, s, 1.0);
      const double room = fractions[s] / fsum * grand_total - side_total[s];
      if (s == 0 || d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && room > best_room + 1e-12)) {
        best = s;
        best_d = d;
        best_room = room;
      }
    }
    side[g] = static_cast<int>(best);
    for (std::size_t c = 0; c < n_classes; ++c) cur[best][c] += count(g, c);
    side_total[best] += group_total[g];
  }

  auto apply = [&](std::size_t g, std::size_t s, double sign) {
    for (std::size_t c = 0; c < n_classes; ++c) cur[s][c] += sign * count(g, c);
  };
  // Local search: single moves, then pair swaps, while the error drops.
  for (int pass = 0; pass < 100; ++pass) {
    bool improved = false;
    for (std::size_t g : order) {
      const auto from = static_cast<std::size_t>(side[g]);
      for (std::size_t to = 0; to < n_sides; ++to) {
        if (to == from) continue;
        const double before = split_error(cur, target);
        apply(g, from, -1.0);
        apply(g, to, 1.0);
        if (split_error(cur, target) < before - 1e-9) {
          side[g] = static_cast<int>(to);
          improved = true;
          break;
        }
        apply(g, to, -1.0);
        apply(g, from, 1.0);
      }
    }
    if (!improved && groups.size() <= 2000) {
      for (std::size_t i = 0; i < order.size() && !improved; ++i) {
        for (std::size_t j = i + 1; j < order.size() && !improved; ++j) {
          const std::size_t a = order[i], b = order[j];
          const auto sa = static_cast<std::size_t>(side[a]), sb = static_cast<std::size_t>(side[b]);
          if (sa == sb) continue;
          const double before = split_error(cur, target);
          apply(a, sa, -1.0);
          apply(b, sb, -1.0);
          apply(a, sb, 1.0);
          apply(b, sa, 1.0);
          if (split_error(cur, target) < before - 1e-9) {
            side[a] = static_cast<int>(sb);
            side[b] = static_cast<int>(sa);
            improved = true;
          } else {
            apply(a, sb, -1.0);
            apply(b, sa, -1.0);
            apply(a, sa, 1.0);
            apply(b, sb, 1.0);
          }
        }
      }
    }
    if (!improved) break;
  }
  return side;
}

bool DatasetSplit::in_train(const std::string& scan_id) const {
  return std::find(train_scan_ids.begin(), train_scan_ids.end(), scan_id) != train_scan_ids.end();
}

DatasetSplit split_stratified(const std::vector<std::pair<std::string, int>>& items, int n_classes,
                              double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must lie in (0, 1)");
  if (n_classes < 1) throw ConfigError("n_classes must be positive");
  std::vector<GroupCounts> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& [scan, cls] : items) {
    if (cls < 0 || cls >= n_classes) throw ValidationError("class index out of range for " + scan);
    auto [it, inserted] = index.emplace(scan, groups.size());
    if (inserted) groups.push_back({scan, std::vector<int>(static_cast<std::size_t>(n_classes), 0)});
    ++groups[it->second].counts[static_cast<std::size_t>(cls)];
  }
  const auto side = assign_groups_stratified(groups, {train_frac, 1.0 - train_frac}, seed);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    (side[g] == 0 ? split.train_scan_ids : split.val_scan_ids).push_back(groups[g].group);
  }
  if (groups.size() > 1) {
    for (int c = 0; c < n_classes; ++c) {
      std::vector<std::string> holders;
      for (const auto& g : groups) {
        if (g.counts[static_cast<std::size_t>(c)] > 0) holders.push_back(g.group);
      }
      if (holders.size() == 1) {
        split.warnings.push_back("StratificationWarning: all nodules of class " + std::to_string(c) +
                                 " belong to subject " + holders.front());
      }
    }
  }
  return split;
}

int class_index(MalignancyClass c) {
  switch (c) {
    case MalignancyClass::C1:
    case MalignancyClass::C1and2: return 0;
    case MalignancyClass::C4: return 1;
    case MalignancyClass::C5: return 2;
  }
  return 0;
}

DatasetSplit split_stratified(const std::vector<LabeledNodule>& nodules, double train_frac,
                              std::uint64_t seed) {
  std::vector<std::pair<std::string, int>> items;
  items.reserve(nodules.size());
  for (const auto& n : nodules) items.emplace_back(n.annotation.scan_id, class_index(n.cls));
  return split_stratified(items, 3, train_frac, seed);
}

}  // namespace lungpipe
