#include "layerprobe/sweep.hpp"

#include "layerprobe/parallel.hpp"
#include "layerprobe/random.hpp"
#include "layerprobe/splits.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <mutex>

namespace layerprobe {

std::uint64_t derive_seed(std::uint64_t master, int layer, int fold, JobKind job) {
  const std::uint64_t coordinates = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(layer)) << 32) +
                                    (static_cast<std::uint64_t>(static_cast<std::uint16_t>(fold)) << 16) +
                                    static_cast<std::uint64_t>(job);
  return master ^ mix64(coordinates);
}

JobKind probe_job(TaskKind task) {
  switch (task) {
    case TaskKind::detect: return JobKind::probe_detect;
    case TaskKind::severity: return JobKind::probe_severity;
    case TaskKind::multi: return JobKind::probe_multi;
  }
  return JobKind::probe_detect;
}

std::string_view to_string(ProbeSlot slot) {
  switch (slot) {
    case ProbeSlot::detect_st: return "detect-st";
    case ProbeSlot::severity_st: return "severity-st";
    case ProbeSlot::detect_mt: return "detect-mt";
    case ProbeSlot::severity_mt: return "severity-mt";
  }
  return "?";
}

std::string_view to_string(JobKind job) {
  switch (job) {
    case JobKind::probe_detect: return "detect";
    case JobKind::probe_severity: return "severity";
    case JobKind::probe_multi: return "multi";
    case JobKind::mi_detect: return "mi_detect";
    case JobKind::mi_severity: return "mi_severity";
    case JobKind::silhouette_detect: return "silhouette_detect";
    case JobKind::silhouette_severity: return "silhouette_severity";
    case JobKind::mi_compare: return "mi_compare";
  }
  return "?";
}

ProbeSlot parse_slot(std::string_view name) {
  for (const ProbeSlot slot : {ProbeSlot::detect_st, ProbeSlot::severity_st, ProbeSlot::detect_mt, ProbeSlot::severity_mt})
    if (to_string(slot) == name) return slot;
  throw PreconditionError("unknown probe slot '" + std::string(name) + "'");
}

SweepError::SweepError(int layer, int fold, std::string task, const std::string& message)
    : Error("layer " + std::to_string(layer) + ", fold " + std::to_string(fold) + ", task " + task + ": " + message),
      layer_(layer),
      fold_(fold),
      task_(std::move(task)) {}

namespace {

constexpr std::array<const char*, 4> kSeverityNames = {"typical", "mild", "moderate", "severe"};

ProbeSlot slot_for(TaskKind task, HeadKind head) {
  if (task == TaskKind::multi) return head == HeadKind::detection ? ProbeSlot::detect_mt : ProbeSlot::severity_mt;
  return head == HeadKind::detection ? ProbeSlot::detect_st : ProbeSlot::severity_st;
}

void check_split_sizes(std::span<const int> labels, int k, bool severity) {
  std::array<std::size_t, kSeverityClasses> counts{};
  for (const int label : labels) ++counts[static_cast<std::size_t>(label)];
  const int classes = severity ? kSeverityClasses : kDetectionClasses;
  for (int c = 0; c < classes; ++c) {
    const std::size_t count = counts[static_cast<std::size_t>(c)];
    if (count < static_cast<std::size_t>(k)) {
      const std::string name = severity ? std::string("severity class ") + std::to_string(c) + " (" + kSeverityNames[static_cast<std::size_t>(c)] + ")"
                                        : std::string("detection class ") + std::to_string(c) + (c == 0 ? " (typical)" : " (dysarthric)");
      throw PreconditionError(name + " has " + std::to_string(count) + " members, fewer than k_folds = " + std::to_string(k));
    }
  }
}

RowMatrixD gather_rows(const RowMatrixD& features, const std::vector<std::size_t>& rows) {
  RowMatrixD out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> gather_labels(std::span<const int> labels, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

struct FoldOutcome {
  // Per head of the task: (accuracy, macro F1).
  std::vector<std::pair<double, double>> heads;
};

FoldOutcome run_fold(const RowMatrixD& features, std::span<const int> detection, std::span<const int> severity,
                     const FoldAssignment& folds, int fold, TaskKind task, ProbeConfig config) {
  const auto train_rows = folds.train_indices(fold);
  const auto test_rows = folds.test_indices(fold);
  RowMatrixD train = gather_rows(features, train_rows);
  RowMatrixD test = gather_rows(features, test_rows);
  if (config.normalize) {
    const Standardizer standardizer = Standardizer::fit(train);
    train = standardizer.apply(train);
    test = standardizer.apply(test);
  }
  const auto train_detection = gather_labels(detection, train_rows);
  const auto train_severity = gather_labels(severity, train_rows);
  const TrainedProbe probe = train_probe(train, ProbeTargets{train_detection, train_severity}, task, config);

  FoldOutcome outcome;
  for (const auto& head : probe.heads) {
    const auto truth = gather_labels(head.kind == HeadKind::detection ? detection : severity, test_rows);
    const auto pred = predict(head, test);
    outcome.heads.emplace_back(accuracy(pred, truth), macro_f1(pred, truth, class_count(head.kind)));
  }
  return outcome;
}

struct Job {
  JobKind kind;
  int fold = 0;
};

std::vector<std::uint64_t> item_keys(const Manifest& manifest) {
  std::vector<std::uint64_t> keys;
  keys.reserve(manifest.items.size());
  for (const auto& item : manifest.items) keys.push_back(hash_string(item.id));
  return keys;
}

void rethrow_tagged(const std::exception_ptr& error, int layer, int fold, JobKind job) {
  try {
    std::rethrow_exception(error);
  } catch (const SweepError&) {
    throw;
  } catch (const std::exception& e) {
    throw SweepError(layer, fold, std::string(to_string(job)), e.what());
  }
}

std::optional<double> criterion_value(const LayerResult& result, const std::string& criterion) {
  if (criterion == "mi_detect") return result.mi_detect;
  if (criterion == "mi_severity") return result.mi_severity;
  if (criterion == "silhouette_detect") return result.silhouette_detect;
  if (criterion == "silhouette_severity") return result.silhouette_severity;
  const auto colon = criterion.find(':');
  if (colon == std::string::npos) throw PreconditionError("unknown criterion '" + criterion + "'");
  const std::string metric = criterion.substr(0, colon);
  if (metric != "accuracy" && metric != "f1") throw PreconditionError("unknown criterion '" + criterion + "'");
  const ProbeSlot slot = parse_slot(criterion.substr(colon + 1));
  const auto it = result.probes.find(slot);
  if (it == result.probes.end()) return std::nullopt;
  return metric == "accuracy" ? it->second.accuracy.mean : it->second.f1.mean;
}

}  // namespace

SweepReport run_sweep(const Dataset& dataset, const AnalysisSettings& settings, const RunOptions& options) {
  settings.probe.validate();
  if (settings.k_folds < 2) throw PreconditionError("k_folds must be >= 2");
  const Manifest& manifest = dataset.manifest();

  std::vector<int> layers = options.layers.empty() ? manifest.layers : options.layers;
  for (const int layer : layers)
    if (std::find(manifest.layers.begin(), manifest.layers.end(), layer) == manifest.layers.end())
      throw PreconditionError("layer " + std::to_string(layer) + " is not in the manifest");
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

  std::vector<TaskKind> tasks = settings.tasks;
  std::sort(tasks.begin(), tasks.end());
  tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());

  const auto detection = manifest.detection_labels();
  const auto severity = manifest.severity_labels();
  const auto keys = item_keys(manifest);

  const bool need_detection_folds = std::find(tasks.begin(), tasks.end(), TaskKind::detect) != tasks.end();
  const bool need_severity_folds = std::any_of(tasks.begin(), tasks.end(), [](TaskKind t) { return t != TaskKind::detect; });
  std::optional<FoldAssignment> detection_folds, severity_folds;
  try {
    if (need_detection_folds) {
      check_split_sizes(detection, settings.k_folds, false);
      detection_folds = stratified_kfold(detection, settings.k_folds, settings.seed);
    }
    if (need_severity_folds) {
      check_split_sizes(severity, settings.k_folds, true);
      severity_folds = stratified_kfold(severity, settings.k_folds, settings.seed);
    }
  } catch (const PreconditionError& e) {
    throw SweepError(layers.empty() ? 0 : layers.front(), -1, "split", e.what());
  }

  std::vector<Job> jobs;
  for (const TaskKind task : tasks)
    for (int fold = 0; fold < settings.k_folds; ++fold) jobs.push_back({probe_job(task), fold});
  if (settings.compute_mi) {
    jobs.push_back({JobKind::mi_detect});
    jobs.push_back({JobKind::mi_severity});
  }
  if (settings.compute_silhouette) {
    jobs.push_back({JobKind::silhouette_detect});
    jobs.push_back({JobKind::silhouette_severity});
  }

  SweepReport report;
  report.dataset_id = manifest.dataset_id;
  report.n_items = manifest.items.size();
  report.settings = settings;
  report.settings.tasks = tasks;
  report.settings.probe.seed = 0;

  const std::size_t total = jobs.size() * layers.size();
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  for (const int layer : layers) {
    const auto matrix = dataset.layer(layer);
    const RowMatrixD features = matrix->values.cast<double>();

    std::vector<FoldOutcome> fold_outcomes(jobs.size());
    std::vector<MiResult> mi_results(jobs.size());
    std::vector<SilhouetteResult> silhouette_results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());

    parallel_for(jobs.size(), options.jobs, [&](std::size_t index) {
      const Job& job = jobs[index];
      const std::uint64_t seed = derive_seed(settings.seed, layer, job.fold, job.kind);
      try {
        switch (job.kind) {
          case JobKind::probe_detect:
          case JobKind::probe_severity:
          case JobKind::probe_multi: {
            const TaskKind task = job.kind == JobKind::probe_detect     ? TaskKind::detect
                                  : job.kind == JobKind::probe_severity ? TaskKind::severity
                                                                        : TaskKind::multi;
            ProbeConfig config = settings.probe;
            config.seed = seed;
            const FoldAssignment& folds = task == TaskKind::detect ? *detection_folds : *severity_folds;
            fold_outcomes[index] = run_fold(features, detection, severity, folds, job.fold, task, config);
            break;
          }
          case JobKind::mi_detect:
            mi_results[index] = mi_discrete(features, detection, settings.mi_k, seed, keys);
            break;
          case JobKind::mi_severity:
            mi_results[index] = mi_discrete(features, severity, settings.mi_k, seed, keys);
            break;
          case JobKind::silhouette_detect:
            silhouette_results[index] = silhouette(features, detection, settings.silhouette_max_points, seed);
            break;
          case JobKind::silhouette_severity:
            silhouette_results[index] = silhouette(features, severity, settings.silhouette_max_points, seed);
            break;
          case JobKind::mi_compare:
            break;
        }
      } catch (...) {
        errors[index] = std::current_exception();
      }
      const std::size_t finished = ++done;
      if (options.progress) {
        const std::lock_guard lock(progress_mutex);
        options.progress(ProgressEvent{layer, job.fold, job.kind, finished, total});
      }
    });

    for (std::size_t i = 0; i < jobs.size(); ++i)
      if (errors[i]) rethrow_tagged(errors[i], layer, jobs[i].fold, jobs[i].kind);

    // Canonical reduction: job order is (task, fold) ascending.
    LayerResult result;
    result.layer = layer;
    std::map<ProbeSlot, std::pair<std::vector<double>, std::vector<double>>> per_slot;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const Job& job = jobs[i];
      switch (job.kind) {
        case JobKind::probe_detect:
        case JobKind::probe_severity:
        case JobKind::probe_multi: {
          const TaskKind task = job.kind == JobKind::probe_detect     ? TaskKind::detect
                                : job.kind == JobKind::probe_severity ? TaskKind::severity
                                                                      : TaskKind::multi;
          const auto heads = heads_of(task);
          for (std::size_t h = 0; h < heads.size(); ++h) {
            auto& [acc, f1] = per_slot[slot_for(task, heads[h])];
            acc.push_back(fold_outcomes[i].heads[h].first);
            f1.push_back(fold_outcomes[i].heads[h].second);
          }
          break;
        }
        case JobKind::mi_detect:
          result.mi_detect = mi_results[i].aggregate;
          result.mi_detect_per_dimension = mi_results[i].per_dimension;
          break;
        case JobKind::mi_severity:
          result.mi_severity = mi_results[i].aggregate;
          result.mi_severity_per_dimension = mi_results[i].per_dimension;
          break;
        case JobKind::silhouette_detect:
          result.silhouette_detect = silhouette_results[i].score;
          result.silhouette_points = silhouette_results[i].n_used;
          break;
        case JobKind::silhouette_severity:
          result.silhouette_severity = silhouette_results[i].score;
          break;
        case JobKind::mi_compare:
          break;
      }
    }
    for (const auto& [slot, values] : per_slot)
      result.probes[slot] = SlotStats{fold_stats(values.first), fold_stats(values.second)};
    report.layer_results.push_back(std::move(result));
  }

  for (const auto& criterion : available_criteria(report)) report.best[criterion] = best_layer(report, criterion);
  return report;
}

std::vector<std::string> available_criteria(const SweepReport& report) {
  std::vector<std::string> out;
  if (report.layer_results.empty()) return out;
  const LayerResult& first = report.layer_results.front();
  for (const auto& [slot, stats] : first.probes) {
    out.push_back("accuracy:" + std::string(to_string(slot)));
    out.push_back("f1:" + std::string(to_string(slot)));
  }
  if (first.mi_detect) out.emplace_back("mi_detect");
  if (first.mi_severity) out.emplace_back("mi_severity");
  if (first.silhouette_detect) out.emplace_back("silhouette_detect");
  if (first.silhouette_severity) out.emplace_back("silhouette_severity");
  return out;
}

int best_layer(const SweepReport& report, const std::string& criterion) {
  if (report.layer_results.empty()) throw PreconditionError("report has no layers");
  std::optional<int> best;
  double best_value = 0.0;
  for (const auto& result : report.layer_results) {
    const auto value = criterion_value(result, criterion);
    if (!value) throw PreconditionError("criterion '" + criterion + "' not present for layer " + std::to_string(result.layer));
    if (!best || *value > best_value || (*value == best_value && result.layer < *best)) {
      best = result.layer;
      best_value = *value;
    }
  }
  return *best;
}

CompareReport compare_embeddings(const Dataset& pretrained, const Dataset& finetuned, int k, std::uint64_t seed,
                                 const RunOptions& options) {
  const Manifest& a = pretrained.manifest();
  const Manifest& b = finetuned.manifest();
  if (a.items.size() != b.items.size())
    throw PreconditionError("item counts differ: " + std::to_string(a.items.size()) + " vs " + std::to_string(b.items.size()));
  for (std::size_t i = 0; i < a.items.size(); ++i)
    if (a.items[i].id != b.items[i].id)
      throw PreconditionError("manifests differ at item " + std::to_string(i) + ": '" + a.items[i].id + "' vs '" + b.items[i].id + "'");
  if (a.layers != b.layers) throw PreconditionError("layer sets differ");
  if (a.dim != b.dim) throw PreconditionError("embedding dims differ");

  std::vector<int> layers = options.layers.empty() ? a.layers : options.layers;
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  const auto keys = item_keys(a);

  CompareReport report;
  report.dataset_pt = a.dataset_id;
  report.dataset_ft = b.dataset_id;
  report.k = k;
  report.seed = seed;
  report.layers.resize(layers.size());
  std::vector<std::exception_ptr> errors(layers.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  parallel_for(layers.size(), options.jobs, [&](std::size_t index) {
    const int layer = layers[index];
    try {
      const RowMatrixD x = pretrained.layer(layer)->values.cast<double>();
      const RowMatrixD y = finetuned.layer(layer)->values.cast<double>();
      const MiResult mi = mi_continuous(x, y, k, derive_seed(seed, layer, 0, JobKind::mi_compare), keys);
      report.layers[index] = CompareLayer{layer, mi.aggregate, mi.per_dimension};
    } catch (...) {
      errors[index] = std::current_exception();
    }
    const std::size_t finished = ++done;
    if (options.progress) {
      const std::lock_guard lock(progress_mutex);
      options.progress(ProgressEvent{layer, 0, JobKind::mi_compare, finished, layers.size()});
    }
  });
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (errors[i]) rethrow_tagged(errors[i], layers[i], 0, JobKind::mi_compare);
  return report;
}

}  // namespace layerprobe
