#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace layerprobe {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;

  int classes() const { return static_cast<int>(counts.rows()); }
  long total() const { return counts.cast<long>().sum(); }
};

struct FoldStats {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)

  bool operator==(const FoldStats&) const = default;
};

double accuracy(std::span<const int> pred, std::span<const int> truth);

/// Unweighted mean of per-class F1 over all `n_classes` classes. A class with
/// precision + recall = 0 (including one absent from both inputs) scores 0.
double macro_f1(std::span<const int> pred, std::span<const int> truth, int n_classes);

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth, int n_classes);

FoldStats fold_stats(std::span<const double> values);

}  // namespace layerprobe
