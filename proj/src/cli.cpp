#include "layerprobe/cli.hpp"

#include "layerprobe/dataset.hpp"
#include "layerprobe/parallel.hpp"
#include "layerprobe/sweep.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace layerprobe::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string dataset;
  std::string manifest;
  std::string dataset_pt;
  std::string manifest_pt;
  std::string dataset_ft;
  std::string manifest_ft;
  std::vector<int> layers;
  int layer = 0;
  std::string task = "detect";
  std::vector<std::string> tasks = {"detect", "severity", "multi"};
  std::string out;
  std::string format;
  std::string in;
  std::string per_dim_dir;
  ProbeConfig probe;
  int k_folds = 5;
  std::uint64_t seed = 42;
  int mi_k = 3;
  std::size_t max_points = 0;  // 0: no cap
  unsigned jobs = default_jobs();
  bool quiet = false;
};

std::string env_name(const std::string& flag) {
  std::string name = "LAYERPROBE_";
  for (const char c : flag) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

// Every flag is long-form and also readable from LAYERPROBE_<FLAG>.
template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  return app->add_option("--" + name, target, help)->envname(env_name(name));
}

void add_dataset_flags(CLI::App* app, Options& o) {
  flag(app, "dataset", o.dataset, "Dataset directory holding layer_NN.bin files")->required()->check(CLI::ExistingDirectory);
  flag(app, "manifest", o.manifest, "Manifest path (default: <dataset>/manifest.json)")->check(CLI::ExistingFile);
}

void add_output_flags(CLI::App* app, Options& o) {
  flag(app, "out", o.out, "Output path (default: standard output)");
  flag(app, "format", o.format, "Report format: json or csv (default: from --out extension, else csv)")
      ->check(CLI::IsMember({"json", "csv"}));
}

void add_run_flags(CLI::App* app, Options& o) {
  flag(app, "seed", o.seed, "Master seed")->capture_default_str();
  flag(app, "jobs", o.jobs, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
  app->add_flag("--quiet", o.quiet, "Suppress progress lines")->envname(env_name("quiet"));
}

void add_probe_flags(CLI::App* app, Options& o) {
  flag(app, "epochs", o.probe.epochs, "Training epochs per fold")->capture_default_str();
  flag(app, "learning-rate", o.probe.learning_rate, "AdamW learning rate")->capture_default_str();
  flag(app, "batch-size", o.probe.batch_size, "Mini-batch size")->capture_default_str();
  flag(app, "beta1", o.probe.beta1, "AdamW beta1")->capture_default_str();
  flag(app, "beta2", o.probe.beta2, "AdamW beta2")->capture_default_str();
  flag(app, "epsilon", o.probe.epsilon, "AdamW epsilon")->capture_default_str();
  flag(app, "weight-decay", o.probe.weight_decay, "AdamW decoupled weight decay")->capture_default_str();
  app->add_flag("--normalize", o.probe.normalize, "Standardize features with train-fold statistics")
      ->envname(env_name("normalize"));
  flag(app, "k-folds", o.k_folds, "Stratified cross-validation folds")->capture_default_str();
}

void add_layers_flag(CLI::App* app, Options& o) {
  flag(app, "layers", o.layers, "Layer indices to analyse (default: all)")->delimiter(',');
}

ReportFormat output_format(const Options& o) {
  if (!o.format.empty()) return parse_format(o.format);
  return fs::path(o.out).extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path manifest_path(const std::string& dataset, const std::string& manifest) {
  const fs::path path = manifest.empty() ? fs::path(dataset) / "manifest.json" : fs::path(manifest);
  if (!fs::is_regular_file(path)) throw UsageError("manifest not found: " + path.string());
  return path;
}

void print_issues(const ValidationReport& report, std::ostream& err) {
  for (const auto& issue : report.issues)
    err << (issue.severity == IssueSeverity::error ? "error" : "warning") << ": " << issue.message
        << (issue.location.empty() ? "" : " [" + issue.location + "]") << "\n";
}

// Loads and validates; throws ValidationFailure when anything is wrong.
Dataset open_checked(const std::string& dataset, const std::string& manifest, std::ostream& err) {
  const fs::path path = manifest_path(dataset, manifest);
  Manifest loaded;
  try {
    loaded = load_manifest(path);
  } catch (const Error& e) {
    throw ValidationFailure(e.what());
  }
  const ValidationReport report = validate_dataset(loaded, dataset);
  if (!report.ok()) {
    print_issues(report, err);
    throw ValidationFailure(std::to_string(report.error_count()) + " validation error(s) in " + dataset);
  }
  return Dataset::open(dataset, path);
}

std::function<void(const ProgressEvent&)> progress_printer(const Options& o, std::ostream& err) {
  if (o.quiet) return {};
  return [&err](const ProgressEvent& e) {
    err << "event=job_done layer=" << e.layer << " fold=" << e.fold << " job=" << to_string(e.job) << " done=" << e.done
        << " total=" << e.total << "\n";
  };
}

void write_output(const std::string& text, const Options& o, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(o.out, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + o.out);
  file << text;
}

void emit(const SweepReport& report, const Options& o, std::ostream& out) {
  write_output(output_format(o) == ReportFormat::json ? render_json(report) : render_csv(report), o, out);
}

void write_per_dimension(const SweepReport& report, const std::string& directory) {
  if (directory.empty()) return;
  fs::create_directories(directory);
  for (const auto& result : report.layer_results) {
    char name[64];
    for (const auto& [label, values] : {std::pair{"detect", &result.mi_detect_per_dimension},
                                        std::pair{"severity", &result.mi_severity_per_dimension}}) {
      if (values->empty()) continue;
      std::snprintf(name, sizeof name, "mi_%s_layer_%02d.csv", label, result.layer);
      MiResult mi;
      mi.per_dimension = *values;
      write_mi_csv(mi, fs::path(directory) / name);
    }
  }
}

AnalysisSettings settings_of(const Options& o) {
  AnalysisSettings settings;
  settings.tasks.clear();
  for (const auto& task : o.tasks) settings.tasks.push_back(parse_task(task));
  settings.k_folds = o.k_folds;
  settings.seed = o.seed;
  settings.probe = o.probe;
  settings.mi_k = o.mi_k;
  if (o.max_points > 0) settings.silhouette_max_points = o.max_points;
  return settings;
}

RunOptions run_options(const Options& o, std::ostream& err, std::vector<int> layers) {
  RunOptions options;
  options.layers = std::move(layers);
  options.jobs = o.jobs;
  options.progress = progress_printer(o, err);
  return options;
}

int dispatch(const std::string& command, Options& o, std::ostream& out, std::ostream& err) {
  if (command == "validate") {
    const fs::path path = manifest_path(o.dataset, o.manifest);
    Manifest manifest;
    try {
      manifest = load_manifest(path);
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kValidationFailure;
    }
    const ValidationReport report = validate_dataset(manifest, o.dataset);
    print_issues(report, err);
    out << "ok=" << (report.ok() ? "true" : "false") << " errors=" << report.error_count()
        << " warnings=" << report.issues.size() - report.error_count() << "\n";
    return report.ok() ? kSuccess : kValidationFailure;
  }

  if (command == "report") {
    std::ifstream in(o.in, std::ios::binary);
    if (!in) throw IoError("cannot open " + o.in);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const SweepReport report = parse_report_json(buffer.str());
    emit(report, o, out);
    return kSuccess;
  }

  if (command == "mi-compare") {
    const Dataset pt = open_checked(o.dataset_pt, o.manifest_pt, err);
    const Dataset ft = open_checked(o.dataset_ft, o.manifest_ft, err);
    const CompareReport report = compare_embeddings(pt, ft, o.mi_k, o.seed, run_options(o, err, o.layers));
    write_output(output_format(o) == ReportFormat::json ? render_json(report) : render_csv(report), o, out);
    return kSuccess;
  }

  const Dataset dataset = open_checked(o.dataset, o.manifest, err);
  AnalysisSettings settings = settings_of(o);
  std::vector<int> layers = o.layers;
  if (command == "probe") {
    settings.tasks = {parse_task(o.task)};
    settings.compute_mi = false;
    settings.compute_silhouette = false;
    layers = {o.layer};
  } else if (command == "mi") {
    settings.tasks.clear();
    settings.compute_silhouette = false;
  } else if (command == "silhouette") {
    settings.tasks.clear();
    settings.compute_mi = false;
  }
  if (!o.quiet) err << "event=start command=" << command << " dataset=" << dataset.manifest().dataset_id << " seed=" << o.seed << "\n";
  const SweepReport report = run_sweep(dataset, settings, run_options(o, err, layers));
  write_per_dimension(report, o.per_dim_dir);
  emit(report, o, out);
  if (!o.quiet) {
    for (const auto& [criterion, layer] : report.best) err << "event=best criterion=" << criterion << " layer=" << layer << "\n";
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Layer-wise probing of frozen speech-encoder embeddings", "layerprobe"};
  app.require_subcommand(1);

  auto* validate = app.add_subcommand("validate", "Check a dataset directory against its manifest");
  add_dataset_flags(validate, o);

  auto* probe = app.add_subcommand("probe", "Cross-validated linear probe on one layer");
  add_dataset_flags(probe, o);
  add_output_flags(probe, o);
  add_run_flags(probe, o);
  add_probe_flags(probe, o);
  flag(probe, "layer", o.layer, "Layer index")->required();
  flag(probe, "task", o.task, "detect, severity or multi")->check(CLI::IsMember({"detect", "severity", "multi"}))->capture_default_str();

  auto* mi = app.add_subcommand("mi", "k-NN mutual information between each layer and the labels");
  add_dataset_flags(mi, o);
  add_output_flags(mi, o);
  add_run_flags(mi, o);
  add_layers_flag(mi, o);
  flag(mi, "mi-k", o.mi_k, "Neighbour count for the MI estimator")->capture_default_str();
  flag(mi, "per-dim-dir", o.per_dim_dir, "Directory for per-dimension MI CSV files");

  auto* compare = app.add_subcommand("mi-compare", "Per-layer MI between two datasets with identical items");
  flag(compare, "dataset-pt", o.dataset_pt, "First (pretrained) dataset directory")->required()->check(CLI::ExistingDirectory);
  flag(compare, "manifest-pt", o.manifest_pt, "Manifest of the first dataset")->check(CLI::ExistingFile);
  flag(compare, "dataset-ft", o.dataset_ft, "Second (fine-tuned) dataset directory")->required()->check(CLI::ExistingDirectory);
  flag(compare, "manifest-ft", o.manifest_ft, "Manifest of the second dataset")->check(CLI::ExistingFile);
  add_output_flags(compare, o);
  add_run_flags(compare, o);
  add_layers_flag(compare, o);
  flag(compare, "mi-k", o.mi_k, "Neighbour count for the KSG estimator")->capture_default_str();

  auto* sil = app.add_subcommand("silhouette", "Silhouette score of each layer under both label sets");
  add_dataset_flags(sil, o);
  add_output_flags(sil, o);
  add_run_flags(sil, o);
  add_layers_flag(sil, o);
  flag(sil, "max-points", o.max_points, "Score a stratified subsample of this size (0: all points)");

  auto* sweep = app.add_subcommand("sweep", "Full layer-wise analysis: probes, MI and silhouette");
  add_dataset_flags(sweep, o);
  add_output_flags(sweep, o);
  add_run_flags(sweep, o);
  add_probe_flags(sweep, o);
  add_layers_flag(sweep, o);
  flag(sweep, "tasks", o.tasks, "Probe tasks (comma separated)")->delimiter(',')->check(CLI::IsMember({"detect", "severity", "multi"}));
  flag(sweep, "mi-k", o.mi_k, "Neighbour count for the MI estimator")->capture_default_str();
  flag(sweep, "max-points", o.max_points, "Silhouette subsample size (0: all points)");
  flag(sweep, "per-dim-dir", o.per_dim_dir, "Directory for per-dimension MI CSV files");

  auto* report = app.add_subcommand("report", "Re-render a JSON sweep report");
  flag(report, "in", o.in, "JSON report")->required()->check(CLI::ExistingFile);
  add_output_flags(report, o);

  std::vector<const char*> argv;
  argv.push_back("layerprobe");
  for (const auto& arg : args) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subcommands = app.get_subcommands();
    err << (subcommands.empty() ? app.help() : subcommands.front()->help());
    return kUsageError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, o, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return kUsageError;
  } catch (const ValidationFailure& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace layerprobe::cli
