#pragma once

// Layer-wise analysis driver. For every selected layer it runs stratified
// K-fold probing for each task, k-NN mutual information against both label
// sets, and silhouette scores, then aggregates fold results and picks the
// best layer per criterion.
//
// Every randomised job draws its seed from
//
//   derive_seed(master, layer, fold, job) = master ^ mix64(layer * 2^32 + fold * 2^16 + job)
//
// with mix64 the SplitMix64 finalizer and `job` a JobKind value. Fold
// assignments themselves use the master seed directly.

#include "layerprobe/dataset.hpp"
#include "layerprobe/error.hpp"
#include "layerprobe/infometrics.hpp"
#include "layerprobe/metrics.hpp"
#include "layerprobe/probe.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace layerprobe {

enum class JobKind : std::uint16_t {
  probe_detect = 0,
  probe_severity = 1,
  probe_multi = 2,
  mi_detect = 3,
  mi_severity = 4,
  silhouette_detect = 5,
  silhouette_severity = 6,
  mi_compare = 7,
};

std::uint64_t derive_seed(std::uint64_t master, int layer, int fold, JobKind job);
JobKind probe_job(TaskKind task);
std::string_view to_string(JobKind job);

/// Result slots: each head of each training setup.
enum class ProbeSlot { detect_st, severity_st, detect_mt, severity_mt };
std::string_view to_string(ProbeSlot slot);
ProbeSlot parse_slot(std::string_view name);

struct SlotStats {
  FoldStats accuracy;
  FoldStats f1;

  bool operator==(const SlotStats&) const = default;
};

struct LayerResult {
  int layer = 0;
  std::map<ProbeSlot, SlotStats> probes;
  std::optional<double> mi_detect;
  std::optional<double> mi_severity;
  std::optional<double> silhouette_detect;
  std::optional<double> silhouette_severity;  // advisory, see report notes
  std::vector<double> mi_detect_per_dimension;
  std::vector<double> mi_severity_per_dimension;
  std::optional<std::size_t> silhouette_points;

  bool operator==(const LayerResult&) const = default;
};

/// Everything that determines the numbers in a report. Echoed verbatim.
struct AnalysisSettings {
  std::vector<TaskKind> tasks = {TaskKind::detect, TaskKind::severity, TaskKind::multi};
  int k_folds = 5;
  std::uint64_t seed = 42;
  ProbeConfig probe;  // probe.seed is replaced per job by derive_seed
  int mi_k = 3;
  bool compute_mi = true;
  bool compute_silhouette = true;
  std::optional<std::size_t> silhouette_max_points;

  bool operator==(const AnalysisSettings&) const = default;
};

struct ProgressEvent {
  int layer = 0;
  int fold = 0;
  JobKind job = JobKind::probe_detect;
  std::size_t done = 0;
  std::size_t total = 0;
};

/// Execution knobs that never change results.
struct RunOptions {
  std::vector<int> layers;  // empty: every manifest layer
  unsigned jobs = 1;
  std::function<void(const ProgressEvent&)> progress;
};

struct SweepReport {
  std::string dataset_id;
  std::size_t n_items = 0;
  AnalysisSettings settings;
  std::vector<LayerResult> layer_results;
  std::map<std::string, int> best;  // criterion -> layer

  bool operator==(const SweepReport&) const = default;
};

struct CompareLayer {
  int layer = 0;
  double mi = 0.0;
  std::vector<double> per_dimension;

  bool operator==(const CompareLayer&) const = default;
};

struct CompareReport {
  std::string dataset_pt;
  std::string dataset_ft;
  int k = 3;
  std::uint64_t seed = 42;
  std::vector<CompareLayer> layers;

  bool operator==(const CompareReport&) const = default;
};

/// A failure inside one job of the grid, tagged with its coordinates.
class SweepError : public Error {
 public:
  SweepError(int layer, int fold, std::string task, const std::string& message);

  int layer() const { return layer_; }
  int fold() const { return fold_; }
  const std::string& task() const { return task_; }

 private:
  int layer_;
  int fold_;
  std::string task_;
};

SweepReport run_sweep(const Dataset& dataset, const AnalysisSettings& settings, const RunOptions& options = {});

/// Criterion names: "accuracy:<slot>", "f1:<slot>" (slot as in to_string),
/// "mi_detect", "mi_severity", "silhouette_detect", "silhouette_severity".
std::vector<std::string> available_criteria(const SweepReport& report);

/// Argmax over layers, ties to the lowest layer index. Throws
/// PreconditionError for an unknown criterion or one absent from the report.
int best_layer(const SweepReport& report, const std::string& criterion);

CompareReport compare_embeddings(const Dataset& pretrained, const Dataset& finetuned, int k = 3,
                                 std::uint64_t seed = 42, const RunOptions& options = {});

// Rendering. All output is byte-deterministic for a given report.
enum class ReportFormat { json, csv };
ReportFormat parse_format(std::string_view name);

std::string render_json(const SweepReport& report);
std::string render_csv(const SweepReport& report);
SweepReport parse_report_json(const std::string& text);

std::string render_json(const CompareReport& report);
std::string render_csv(const CompareReport& report);
CompareReport parse_compare_json(const std::string& text);

void emit_report(const SweepReport& report, ReportFormat format, const std::filesystem::path& path);
void emit_report(const CompareReport& report, ReportFormat format, const std::filesystem::path& path);

/// CSV column order for sweep reports.
inline constexpr std::string_view kCsvHeader =
    "layer,task,accuracy_mean,accuracy_std,f1_mean,f1_std,mi_detect,mi_severity,silhouette_detect,silhouette_severity";

}  // namespace layerprobe
