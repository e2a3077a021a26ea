#include "layerprobe/metrics.hpp"

#include "layerprobe/error.hpp"

#include <cmath>
#include <string>

namespace layerprobe {

namespace {

void check_pair(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size())
    throw PreconditionError("prediction/truth length mismatch: " + std::to_string(pred.size()) + " vs " +
                            std::to_string(truth.size()));
  if (truth.empty()) throw PreconditionError("empty prediction set");
}

}  // namespace

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  check_pair(pred, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth, int n_classes) {
  check_pair(pred, truth);
  if (n_classes < 1) throw PreconditionError("n_classes must be >= 1");
  ConfusionMatrix cm{Eigen::MatrixXi::Zero(n_classes, n_classes)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes)
      throw PreconditionError("label out of range at position " + std::to_string(i));
    cm.counts(truth[i], pred[i]) += 1;
  }
  return cm;
}

double macro_f1(std::span<const int> pred, std::span<const int> truth, int n_classes) {
  const ConfusionMatrix cm = confusion(pred, truth, n_classes);
  double total = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const double tp = cm.counts(c, c);
    const double predicted = cm.counts.col(c).sum();
    const double actual = cm.counts.row(c).sum();
    // F1 = 2PR/(P+R) = 2tp / (predicted + actual); zero when P + R = 0.
    if (tp > 0.0) total += 2.0 * tp / (predicted + actual);
  }
  return total / n_classes;
}

FoldStats fold_stats(std::span<const double> values) {
  if (values.size() < 2) throw PreconditionError("fold_stats needs at least 2 values");
  FoldStats stats;
  stats.values.assign(values.begin(), values.end());
  double sum = 0.0;
  for (const double v : values) sum += v;
  stats.mean = sum / static_cast<double>(values.size());
  double squares = 0.0;
  for (const double v : values) squares += (v - stats.mean) * (v - stats.mean);
  stats.std = std::sqrt(squares / static_cast<double>(values.size() - 1));
  return stats;
}

}  // namespace layerprobe
