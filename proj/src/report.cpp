#include "layerprobe/sweep.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>

namespace layerprobe {

using nlohmann::json;

namespace {

json fold_stats_json(const FoldStats& stats) {
  return {{"values", stats.values}, {"mean", stats.mean}, {"std", stats.std}};
}

FoldStats fold_stats_from(const json& node) {
  FoldStats stats;
  stats.values = node.at("values").get<std::vector<double>>();
  stats.mean = node.at("mean").get<double>();
  stats.std = node.at("std").get<double>();
  return stats;
}

template <typename T>
json optional_json(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& node, const char* key) {
  const auto it = node.find(key);
  if (it == node.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

json probe_config_json(const ProbeConfig& config) {
  return {{"epochs", config.epochs},   {"learning_rate", config.learning_rate}, {"batch_size", config.batch_size},
          {"beta1", config.beta1},     {"beta2", config.beta2},                 {"epsilon", config.epsilon},
          {"weight_decay", config.weight_decay}, {"normalize", config.normalize}};
}

ProbeConfig probe_config_from(const json& node) {
  ProbeConfig config;
  config.epochs = node.at("epochs").get<int>();
  config.learning_rate = node.at("learning_rate").get<double>();
  config.batch_size = node.at("batch_size").get<int>();
  config.beta1 = node.at("beta1").get<double>();
  config.beta2 = node.at("beta2").get<double>();
  config.epsilon = node.at("epsilon").get<double>();
  config.weight_decay = node.at("weight_decay").get<double>();
  config.normalize = node.at("normalize").get<bool>();
  return config;
}

json settings_json(const AnalysisSettings& settings) {
  json tasks = json::array();
  for (const TaskKind task : settings.tasks) tasks.push_back(std::string(to_string(task)));
  return {{"tasks", tasks},
          {"k_folds", settings.k_folds},
          {"seed", settings.seed},
          {"probe", probe_config_json(settings.probe)},
          {"mi_k", settings.mi_k},
          {"compute_mi", settings.compute_mi},
          {"compute_silhouette", settings.compute_silhouette},
          {"silhouette_max_points", optional_json(settings.silhouette_max_points)},
          {"fold_unit", "utterance"},
          {"f1_variant", "macro"},
          {"mi_aggregation", "mean"},
          {"mi_units", "nats"},
          {"silhouette_severity_advisory", true},
          {"sub_seed_scheme", "seed ^ splitmix64(layer*2^32 + fold*2^16 + job)"}};
}

AnalysisSettings settings_from(const json& node) {
  AnalysisSettings settings;
  settings.tasks.clear();
  for (const auto& task : node.at("tasks")) settings.tasks.push_back(parse_task(task.get<std::string>()));
  settings.k_folds = node.at("k_folds").get<int>();
  settings.seed = node.at("seed").get<std::uint64_t>();
  settings.probe = probe_config_from(node.at("probe"));
  settings.mi_k = node.at("mi_k").get<int>();
  settings.compute_mi = node.at("compute_mi").get<bool>();
  settings.compute_silhouette = node.at("compute_silhouette").get<bool>();
  settings.silhouette_max_points = optional_from<std::size_t>(node, "silhouette_max_points");
  return settings;
}

json layer_json(const LayerResult& result) {
  json probes = json::object();
  for (const auto& [slot, stats] : result.probes)
    probes[std::string(to_string(slot))] = {{"accuracy", fold_stats_json(stats.accuracy)}, {"f1", fold_stats_json(stats.f1)}};
  return {{"layer", result.layer},
          {"probes", probes},
          {"mi_detect", optional_json(result.mi_detect)},
          {"mi_severity", optional_json(result.mi_severity)},
          {"silhouette_detect", optional_json(result.silhouette_detect)},
          {"silhouette_severity", optional_json(result.silhouette_severity)},
          {"silhouette_points", optional_json(result.silhouette_points)},
          {"mi_detect_per_dimension", result.mi_detect_per_dimension},
          {"mi_severity_per_dimension", result.mi_severity_per_dimension}};
}

LayerResult layer_from(const json& node) {
  LayerResult result;
  result.layer = node.at("layer").get<int>();
  for (const auto& [name, stats] : node.at("probes").items())
    result.probes[parse_slot(name)] = SlotStats{fold_stats_from(stats.at("accuracy")), fold_stats_from(stats.at("f1"))};
  result.mi_detect = optional_from<double>(node, "mi_detect");
  result.mi_severity = optional_from<double>(node, "mi_severity");
  result.silhouette_detect = optional_from<double>(node, "silhouette_detect");
  result.silhouette_severity = optional_from<double>(node, "silhouette_severity");
  result.silhouette_points = optional_from<std::size_t>(node, "silhouette_points");
  result.mi_detect_per_dimension = node.value("mi_detect_per_dimension", std::vector<double>{});
  result.mi_severity_per_dimension = node.value("mi_severity_per_dimension", std::vector<double>{});
  return result;
}

std::string number(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.6g", value);
  return buffer;
}

std::string number(const std::optional<double>& value) { return value ? number(*value) : std::string(); }

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

ReportFormat parse_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  throw PreconditionError("unknown report format '" + std::string(name) + "' (expected json or csv)");
}

std::string render_json(const SweepReport& report) {
  json layers = json::array();
  for (const auto& result : report.layer_results) layers.push_back(layer_json(result));
  const json root = {{"dataset_id", report.dataset_id},
                     {"n_items", report.n_items},
                     {"config", settings_json(report.settings)},
                     {"layer_results", layers},
                     {"best", report.best}};
  return root.dump(2) + "\n";
}

SweepReport parse_report_json(const std::string& text) {
  const json root = parse_json(text, "report");
  try {
    SweepReport report;
    report.dataset_id = root.at("dataset_id").get<std::string>();
    report.n_items = root.at("n_items").get<std::size_t>();
    report.settings = settings_from(root.at("config"));
    for (const auto& node : root.at("layer_results")) report.layer_results.push_back(layer_from(node));
    report.best = root.at("best").get<std::map<std::string, int>>();
    if (report.layer_results.empty()) throw ParseError("report has no layer results");
    return report;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

std::string render_csv(const SweepReport& report) {
  std::string out(kCsvHeader);
  out += "\n";
  for (const auto& result : report.layer_results) {
    const std::string shared = "," + number(result.mi_detect) + "," + number(result.mi_severity) + "," +
                               number(result.silhouette_detect) + "," + number(result.silhouette_severity) + "\n";
    if (result.probes.empty()) {
      out += std::to_string(result.layer) + ",none,,,," + shared;
      continue;
    }
    for (const auto& [slot, stats] : result.probes) {
      out += std::to_string(result.layer) + "," + std::string(to_string(slot)) + "," + number(stats.accuracy.mean) + "," +
             number(stats.accuracy.std) + "," + number(stats.f1.mean) + "," + number(stats.f1.std) + shared;
    }
  }
  return out;
}

std::string render_json(const CompareReport& report) {
  json layers = json::array();
  for (const auto& layer : report.layers)
    layers.push_back({{"layer", layer.layer}, {"mi", layer.mi}, {"per_dimension", layer.per_dimension}});
  const json root = {{"dataset_pt", report.dataset_pt}, {"dataset_ft", report.dataset_ft}, {"k", report.k},
                     {"seed", report.seed},             {"mi_units", "nats"},            {"layers", layers}};
  return root.dump(2) + "\n";
}

CompareReport parse_compare_json(const std::string& text) {
  const json root = parse_json(text, "comparison report");
  try {
    CompareReport report;
    report.dataset_pt = root.at("dataset_pt").get<std::string>();
    report.dataset_ft = root.at("dataset_ft").get<std::string>();
    report.k = root.at("k").get<int>();
    report.seed = root.at("seed").get<std::uint64_t>();
    for (const auto& node : root.at("layers"))
      report.layers.push_back({node.at("layer").get<int>(), node.at("mi").get<double>(),
                               node.at("per_dimension").get<std::vector<double>>()});
    return report;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed comparison report: ") + e.what());
  }
}

std::string render_csv(const CompareReport& report) {
  std::string out = "layer,mi_pt_ft\n";
  for (const auto& layer : report.layers) out += std::to_string(layer.layer) + "," + number(layer.mi) + "\n";
  return out;
}

void emit_report(const SweepReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_text(format == ReportFormat::json ? render_json(report) : render_csv(report), path);
}

void emit_report(const CompareReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_text(format == ReportFormat::json ? render_json(report) : render_csv(report), path);
}

}  // namespace layerprobe
