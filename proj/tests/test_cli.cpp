#include "doctest.h"

#include "layerprobe/cli.hpp"
#include "layerprobe/sweep.hpp"
#include "support/synthetic.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace layerprobe;
using namespace layerprobe::testing;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// One planted dataset on disk shared by the CLI cases. The wider class
// separation leaves the typical-vs-rest split a margin of several noise stds.
const TempDir& planted_dir() {
  static TempDir dir("cli");
  static bool written = false;
  if (!written) {
    PlantedSpec spec;
    spec.n_layers = 6;
    spec.separation = 8.0;
    planted_dataset(spec).save(dir.path());
    written = true;
  }
  return dir;
}

}  // namespace

TEST_CASE("validate accepts a well-formed dataset") {
  const Outcome o = call({"validate", "--dataset", planted_dir().path().string()});
  CHECK(o.code == cli::kSuccess);
  CHECK(o.out == "ok=true errors=0 warnings=0\n");
}

TEST_CASE("usage errors exit 1") {
  CHECK(call({}).code == cli::kUsageError);
  CHECK(call({"frobnicate"}).code == cli::kUsageError);
  CHECK(call({"probe", "--dataset", planted_dir().path().string()}).code == cli::kUsageError);  // --layer missing
  CHECK(call({"probe", "--dataset", planted_dir().path().string(), "--layer", "1", "--task", "both"}).code ==
        cli::kUsageError);

  TempDir empty("nomanifest");
  const Outcome o = call({"sweep", "--dataset", empty.path().string()});
  CHECK(o.code == cli::kUsageError);
  CHECK(o.err.find("manifest not found") != std::string::npos);
  CHECK(o.err.find("--dataset") != std::string::npos);  // help text follows

  CHECK(call({"--help"}).code == cli::kSuccess);
}

TEST_CASE("invalid data exits 2") {
  TempDir dir("invalid");
  PlantedSpec spec;
  spec.n_layers = 2;
  spec.planted_layer = 1;
  spec.severity_counts = {20, 10, 10, 10};
  planted_dataset(spec).save(dir.path());
  std::filesystem::remove(dir / "layer_02.bin");

  Outcome o = call({"validate", "--dataset", dir.path().string()});
  CHECK(o.code == cli::kValidationFailure);
  CHECK(o.err.find("layer 2") != std::string::npos);
  o = call({"mi", "--dataset", dir.path().string(), "--quiet"});
  CHECK(o.code == cli::kValidationFailure);
}

TEST_CASE("runtime errors exit 3") {
  TempDir dir("tiny");
  PlantedSpec spec;
  spec.n_layers = 1;
  spec.planted_layer = 1;
  spec.severity_counts = {20, 10, 3, 10};
  planted_dataset(spec).save(dir.path());
  const Outcome o = call({"sweep", "--dataset", dir.path().string(), "--quiet", "--epochs", "1"});
  CHECK(o.code == cli::kRuntimeError);
  CHECK(o.err.find("moderate") != std::string::npos);
}

TEST_CASE("probe on the planted layer detects reliably") {
  const Outcome o = call({"probe", "--dataset", planted_dir().path().string(), "--layer", "5", "--task", "detect",
                          "--format", "json", "--quiet"});
  REQUIRE(o.code == cli::kSuccess);
  const SweepReport report = parse_report_json(o.out);
  REQUIRE(report.layer_results.size() == 1);
  CHECK(report.layer_results[0].layer == 5);
  CHECK(report.layer_results[0].probes.at(ProbeSlot::detect_st).accuracy.mean >= 0.95);
  CHECK(o.err.empty());

  const Outcome csv = call({"probe", "--dataset", planted_dir().path().string(), "--layer", "5", "--quiet"});
  REQUIRE(csv.code == cli::kSuccess);
  std::istringstream lines(csv.out);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == kCsvHeader);
  CHECK(row.rfind("5,detect-st,", 0) == 0);
  const std::string accuracy = row.substr(12, row.find(',', 12) - 12);
  CHECK(std::stod(accuracy) >= 0.95);
}

TEST_CASE("sweep writes reports, per-dimension files and progress") {
  const TempDir out("cliout");
  const std::string dataset = planted_dir().path().string();
  const Outcome o = call({"sweep", "--dataset", dataset, "--tasks", "detect", "--epochs", "2", "--layers", "4,5", "--out",
                          (out / "r.json").string(), "--per-dim-dir", (out / "dims").string(), "--jobs", "2"});
  REQUIRE(o.code == cli::kSuccess);
  CHECK(o.err.find("event=start command=sweep") != std::string::npos);
  CHECK(o.err.find("event=job_done layer=4") != std::string::npos);
  CHECK(o.err.find("event=best criterion=mi_detect layer=5") != std::string::npos);
  CHECK(std::filesystem::exists(out / "dims" / "mi_detect_layer_05.csv"));
  CHECK(slurp(out / "dims" / "mi_severity_layer_04.csv").rfind("dimension,value\n", 0) == 0);

  const SweepReport report = parse_report_json(slurp(out / "r.json"));
  CHECK(report.layer_results.size() == 2);
  CHECK(report.settings.probe.epochs == 2);

  const Outcome rendered = call({"report", "--in", (out / "r.json").string(), "--format", "csv"});
  CHECK(rendered.code == cli::kSuccess);
  CHECK(rendered.out == render_csv(report));
  const Outcome again = call({"report", "--in", (out / "r.json").string(), "--out", (out / "copy.json").string()});
  CHECK(again.code == cli::kSuccess);
  CHECK(slurp(out / "copy.json") == slurp(out / "r.json"));
}

TEST_CASE("environment variables fill unset flags and flags override them") {
  const std::string dataset = planted_dir().path().string();
  ::setenv("LAYERPROBE_SEED", "7", 1);
  ::setenv("LAYERPROBE_QUIET", "1", 1);
  Outcome o = call({"silhouette", "--dataset", dataset, "--layers", "1", "--format", "json"});
  CHECK(o.code == cli::kSuccess);
  CHECK(parse_report_json(o.out).settings.seed == 7);
  CHECK(o.err.empty());
  o = call({"silhouette", "--dataset", dataset, "--layers", "1", "--format", "json", "--seed", "8"});
  CHECK(parse_report_json(o.out).settings.seed == 8);
  ::unsetenv("LAYERPROBE_SEED");
  ::unsetenv("LAYERPROBE_QUIET");
}

TEST_CASE("mi-compare of a dataset with itself") {
  const std::string dataset = planted_dir().path().string();
  const Outcome o =
      call({"mi-compare", "--dataset-pt", dataset, "--dataset-ft", dataset, "--layers", "1,2", "--quiet", "--format", "json"});
  REQUIRE(o.code == cli::kSuccess);
  const CompareReport r = parse_compare_json(o.out);
  REQUIRE(r.layers.size() == 2);
  for (const auto& l : r.layers) CHECK(l.mi >= 2.0);
}
