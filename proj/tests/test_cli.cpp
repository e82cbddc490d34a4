#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lungpipe/config.hpp"
#include "lungpipe/error.hpp"
#include "lungpipe/metaimage.hpp"
#include "lungpipe/phantom.hpp"
#include "lungpipe/run.hpp"
#include "support.hpp"

using namespace lungpipe;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool has_violation(const std::vector<std::string>& v, const std::string& prefix) {
  for (const auto& s : v)
    if (s.rfind(prefix, 0) == 0) return true;
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Exec {
  int code;
  std::string out, err;
};

Exec run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(LUNGPIPE_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "stdout.txt"), slurp(dir / "stderr.txt")};
}

/// Shipped default config copied into `dir` with the files it references.
fs::path materialize_default(const fs::path& dir) {
  fs::copy_file(fs::path(LUNGPIPE_CONFIG_DIR) / "default.json", dir / "default.json");
  fs::create_directories(dir / "cohort" / "scans");
  std::ofstream(dir / "cohort" / "labels.csv") << "scan_id,cancer\n";
  return dir / "default.json";
}

}  // namespace

TEST(Config, EmptyConfigNamesEveryRequiredKey) {
  const auto v = validate_config(json::object(), {}, false);
  for (const char* key : {"version", "paths.scans", "paths.labels", "paths.out", "integration.mode"})
    EXPECT_TRUE(has_violation(v, std::string(key) + ":")) << key;
  EXPECT_THROW(parse_config(json::object(), {}, false), ConfigError);
}

TEST(Config, DogBoundsViolation) {
  json j = default_config_json();
  j["detection"]["d_min"] = 60.0;
  const auto v = validate_config(j, {}, false);
  ASSERT_TRUE(has_violation(v, "detection.d_min:"));
  EXPECT_NE(v.front().find("d_max"), std::string::npos);
}

TEST(Config, UnknownKeysAndTypes) {
  json j = default_config_json();
  j["extras"] = 1;
  j["seed"] = -1;
  j["integration"]["mode"] = "hybrid";
  const auto v = validate_config(j, {}, false);
  EXPECT_TRUE(has_violation(v, "extras:"));
  EXPECT_TRUE(has_violation(v, "seed:"));
  EXPECT_TRUE(has_violation(v, "integration.mode:"));
  try {
    parse_config(j, {}, false);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("extras"), std::string::npos);
    EXPECT_NE(msg.find("seed"), std::string::npos);
  }
}

TEST(Config, ShippedDefaultIsValid) {
  const json shipped = json::parse(slurp(fs::path(LUNGPIPE_CONFIG_DIR) / "default.json"));
  EXPECT_EQ(shipped, default_config_json());
  EXPECT_TRUE(validate_config(shipped, {}, false).empty());
  const auto dir = lungpipe::fixtures::temp_dir("default_cfg");
  const fs::path file = materialize_default(dir);
  const RunConfig c = load_config(file);
  EXPECT_EQ(c.scans, (dir / "cohort" / "scans").lexically_normal());
  EXPECT_EQ(c.labels, (dir / "cohort" / "labels.csv").lexically_normal());
  EXPECT_EQ(c.mode, IntegrationMode::Baseline);
  EXPECT_EQ(c.cv.k, 5);
  EXPECT_EQ(c.detection.d_max, 60.0);
}

TEST(Config, MissingPathsReportedWhenChecked) {
  const auto dir = lungpipe::fixtures::temp_dir("missing_paths");
  const auto v = validate_config(default_config_json(), dir, true);
  EXPECT_TRUE(has_violation(v, "paths.scans:"));
  EXPECT_TRUE(has_violation(v, "paths.labels:"));
}

TEST(Config, ProbabilityModeNeedsCheckpoint) {
  json j = default_config_json();
  j["integration"]["mode"] = "prob";
  EXPECT_TRUE(has_violation(validate_config(j, {}, false), "paths.mal_model:"));
  const auto dir = lungpipe::fixtures::temp_dir("prob_no_ckpt");
  RunConfig c = parse_config(default_config_json(), dir, false);
  c.mode = IntegrationMode::Probability;
  EXPECT_THROW(run_end_to_end(c), ConfigError);
  EXPECT_FALSE(fs::exists(c.out / "report.json"));
}

TEST(Config, HashIsStable) {
  EXPECT_EQ(config_hash(default_config_json()), config_hash(default_config_json()));
  json j = default_config_json();
  j["seed"] = 1;
  EXPECT_NE(config_hash(j), config_hash(default_config_json()));
}

TEST(Labels, RoundTrip) {
  const auto dir = lungpipe::fixtures::temp_dir("labels");
  write_patient_labels({{"a", 1}, {"b", 0}}, dir / "l.csv");
  EXPECT_EQ(read_patient_labels(dir / "l.csv"), (std::map<std::string, int>{{"a", 1}, {"b", 0}}));
  std::ofstream(dir / "bad.csv") << "scan_id,cancer\na,2\n";
  EXPECT_THROW(read_patient_labels(dir / "bad.csv"), ValidationError);
}

TEST(Cli, UsageErrorExitsTwo) {
  const auto dir = lungpipe::fixtures::temp_dir("cli_usage");
  const Exec e = run_cli("detect --bogus", dir);
  EXPECT_EQ(e.code, 2);
  EXPECT_EQ(json::parse(e.err)["error"], "UsageError");
}

TEST(Cli, ErrorsAreStructuredJson) {
  const auto dir = lungpipe::fixtures::temp_dir("cli_errors");
  Exec e = run_cli("preprocess --in " + (dir / "missing.mhd").string() + " --out " + (dir / "o.mhd").string(), dir);
  EXPECT_EQ(e.code, 1);
  EXPECT_EQ(json::parse(e.err)["error"], "IoError");
  const fs::path cfg = materialize_default(dir);
  e = run_cli("run-pipeline --config " + cfg.string() + " --mode prob", dir);
  EXPECT_EQ(e.code, 1);
  const json err = json::parse(e.err);
  EXPECT_EQ(err["error"], "ConfigError");
  EXPECT_NE(err["message"].get<std::string>().find("paths.mal_model"), std::string::npos);
}

TEST(Cli, PhantomPreprocessSegmentDetect) {
  const auto dir = lungpipe::fixtures::temp_dir("cli_stages");
  RandomPhantomOptions o;
  o.shape = {80, 96, 128};
  o.n_nodules = 1;
  o.min_diameter = 12;
  o.max_diameter = 14;
  json spec = random_phantom_spec(o, 4, "p0");
  std::ofstream(dir / "spec.json") << spec.dump();
  ASSERT_EQ(run_cli("phantom --spec " + (dir / "spec.json").string() + " --out " + (dir / "ph").string(), dir).code, 0);
  const fs::path scan = dir / "ph" / "p0.mhd";
  ASSERT_TRUE(fs::exists(scan));
  ASSERT_EQ(run_cli("preprocess --in " + scan.string() + " --out " + (dir / "norm.mhd").string(), dir).code, 0);
  const CtVolume norm = load_volume(dir / "norm.mhd");
  for (float v : norm.voxels.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  ASSERT_EQ(run_cli("segment --in " + scan.string() + " --out " + (dir / "mask.mhd").string(), dir).code, 0);
  const Exec d = run_cli("detect --scan " + scan.string() + " --out " + (dir / "c.csv").string(), dir);
  ASSERT_EQ(d.code, 0) << d.err;
  const std::string csv = slurp(dir / "c.csv");
  EXPECT_EQ(csv.rfind("scan_id,z,y,x,radius_mm,response,power,relative_z", 0), 0u);
  EXPECT_NE(csv.find("\np0,"), std::string::npos);
}

TEST(Cli, SmallRunIsDeterministic) {
  const auto dir = lungpipe::fixtures::temp_dir("cli_run");
  ASSERT_EQ(run_cli("phantom --cohort 4 --seed 3 --out " + (dir / "cohort").string(), dir).code, 0);
  json cfg = default_config_json();
  cfg["paths"] = {{"scans", "cohort/scans"}, {"labels", "cohort/labels.csv"}, {"out", "out"}};
  cfg["cv"]["k"] = 2;
  cfg["cv"]["grids"] = "compact";
  cfg["seed"] = 5;
  std::ofstream(dir / "cfg.json") << cfg.dump(2);
  const Exec a = run_cli("run-pipeline --config " + (dir / "cfg.json").string() + " --out " + (dir / "a.json").string(), dir);
  ASSERT_EQ(a.code, 0) << a.err;
  const Exec b = run_cli("run-pipeline --config " + (dir / "cfg.json").string() + " --out " + (dir / "b.json").string(), dir);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(json::parse(a.out)["report_hash"], json::parse(b.out)["report_hash"]);
  const json report = json::parse(slurp(dir / "a.json"));
  EXPECT_EQ(report["patients"].size(), 4u);
  for (const auto& p : report["patients"]) {
    EXPECT_GE(p["probability"].get<double>(), 0.0);
    EXPECT_LE(p["probability"].get<double>(), 1.0);
  }
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  const Exec ev = run_cli("evaluate --pred " + (dir / "a.json").string() + " --truth " +
                              (dir / "cohort" / "labels.csv").string() + " --reference " +
                              (dir / "cohort" / "reference.csv").string() + " --plot " + (dir / "pr.svg").string(),
                          dir);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_TRUE(json::parse(ev.out).contains("patients"));
  EXPECT_TRUE(fs::exists(dir / "pr.svg"));
}
