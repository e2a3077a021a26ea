#pragma once

// Linear probes on frozen embeddings: one fully-connected layer per head with
// softmax cross-entropy, trained by mini-batch AdamW at 64-bit precision.

#include "layerprobe/dataset.hpp"
#include "layerprobe/error.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace layerprobe {

enum class TaskKind { detect, severity, multi };
enum class HeadKind { detection, severity };

std::string_view to_string(TaskKind task);
std::string_view to_string(HeadKind head);
/// Accepts "detect", "severity", "multi". Throws PreconditionError otherwise.
TaskKind parse_task(std::string_view name);

/// Heads trained for a task, in canonical order (detection before severity).
std::vector<HeadKind> heads_of(TaskKind task);
int class_count(HeadKind head);

struct ProbeConfig {
  int epochs = 20;
  double learning_rate = 3e-4;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  bool normalize = false;

  /// Throws PreconditionError naming the first violated field.
  void validate() const;

  bool operator==(const ProbeConfig&) const = default;
};

struct LinearHead {
  HeadKind kind = HeadKind::detection;
  Eigen::MatrixXd weights;  // classes x dim
  Eigen::VectorXd bias;     // classes

  int classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
};

/// All trainable parameters of a probe in one flat buffer so a single AdamW
/// step covers every head. Head h occupies [offset(h), offset(h+1)): its
/// classes x dim weights row-major, then its bias.
class ProbeParameters {
 public:
  ProbeParameters(std::vector<HeadKind> heads, int dim);

  const std::vector<HeadKind>& heads() const { return heads_; }
  int dim() const { return dim_; }
  std::size_t offset(std::size_t head) const;
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Eigen::Map<const RowMatrixD> weights(std::size_t head) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t head) const;
  LinearHead extract(std::size_t head) const;

 private:
  std::vector<HeadKind> heads_;
  int dim_;
  std::vector<double> values_;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit OptimizerState(std::size_t n_params) : m(n_params, 0.0), v(n_params, 0.0) {}
};

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad_logits;
};

/// Max-subtracted log-sum-exp; finite for any finite logits.
CrossEntropy softmax_cross_entropy(std::span<const double> logits, int label);

/// One decoupled-weight-decay Adam update, in place:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   p -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * p
void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                const ProbeConfig& config);

/// Labels per head. A span may be empty when the task does not need it.
struct ProbeTargets {
  std::span<const int> detection;
  std::span<const int> severity;

  std::span<const int> of(HeadKind head) const { return head == HeadKind::detection ? detection : severity; }
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // ProbeParameters layout
};

/// Sum over heads of the mean cross-entropy on `rows`, with its gradient.
LossAndGradient probe_loss(const ProbeParameters& params, const RowMatrixD& features, const ProbeTargets& targets,
                           std::span<const std::size_t> rows);

struct TrainedProbe {
  TaskKind task = TaskKind::detect;
  ProbeConfig config;
  std::vector<LinearHead> heads;
  std::vector<double> loss_curve;  // per-epoch mean training loss

  const LinearHead& head(HeadKind kind) const;
};

/// Zero-initialised heads; each epoch visits a fresh permutation of all rows
/// in batches of `batch_size` (last partial batch kept).
TrainedProbe train_probe(const RowMatrixD& features, const ProbeTargets& targets, TaskKind task,
                         const ProbeConfig& config);

/// Argmax of the logits; ties go to the lowest class index.
std::vector<int> predict(const LinearHead& head, const RowMatrixD& features);
/// One prediction vector per head, in the probe's head order.
std::vector<std::vector<int>> predict(const TrainedProbe& probe, const RowMatrixD& features);

/// Per-dimension standardization fitted on training rows. Zero-variance
/// dimensions are centred but not scaled.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const RowMatrixD& features);
  RowMatrixD apply(const RowMatrixD& features) const;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace layerprobe
