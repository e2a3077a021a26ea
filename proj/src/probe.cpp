#include "layerprobe/probe.hpp"

#include "layerprobe/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace layerprobe {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::detect: return "detect";
    case TaskKind::severity: return "severity";
    case TaskKind::multi: return "multi";
  }
  return "?";
}

std::string_view to_string(HeadKind head) { return head == HeadKind::detection ? "detection" : "severity"; }

TaskKind parse_task(std::string_view name) {
  if (name == "detect") return TaskKind::detect;
  if (name == "severity") return TaskKind::severity;
  if (name == "multi") return TaskKind::multi;
  throw PreconditionError("unknown task '" + std::string(name) + "' (expected detect, severity or multi)");
}

std::vector<HeadKind> heads_of(TaskKind task) {
  switch (task) {
    case TaskKind::detect: return {HeadKind::detection};
    case TaskKind::severity: return {HeadKind::severity};
    case TaskKind::multi: return {HeadKind::detection, HeadKind::severity};
  }
  return {};
}

int class_count(HeadKind head) { return head == HeadKind::detection ? kDetectionClasses : kSeverityClasses; }

void ProbeConfig::validate() const {
  if (epochs < 1) throw PreconditionError("epochs must be >= 1, got " + std::to_string(epochs));
  if (!(learning_rate > 0.0)) throw PreconditionError("learning_rate must be > 0");
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1, got " + std::to_string(batch_size));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw PreconditionError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw PreconditionError("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw PreconditionError("epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw PreconditionError("weight_decay must be >= 0");
}

ProbeParameters::ProbeParameters(std::vector<HeadKind> heads, int dim) : heads_(std::move(heads)), dim_(dim) {
  std::size_t total = 0;
  for (const HeadKind head : heads_) total += static_cast<std::size_t>(class_count(head)) * static_cast<std::size_t>(dim_ + 1);
  values_.assign(total, 0.0);
}

std::size_t ProbeParameters::offset(std::size_t head) const {
  std::size_t off = 0;
  for (std::size_t h = 0; h < head; ++h)
    off += static_cast<std::size_t>(class_count(heads_[h])) * static_cast<std::size_t>(dim_ + 1);
  return off;
}

Eigen::Map<const RowMatrixD> ProbeParameters::weights(std::size_t head) const {
  return {values_.data() + offset(head), class_count(heads_[head]), dim_};
}

Eigen::Map<const Eigen::VectorXd> ProbeParameters::bias(std::size_t head) const {
  const int classes = class_count(heads_[head]);
  return {values_.data() + offset(head) + static_cast<std::size_t>(classes) * static_cast<std::size_t>(dim_), classes};
}

LinearHead ProbeParameters::extract(std::size_t head) const {
  return LinearHead{heads_[head], weights(head), bias(head)};
}

CrossEntropy softmax_cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw PreconditionError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) + " classes");
  const double peak = *std::max_element(logits.begin(), logits.end());
  CrossEntropy out;
  out.grad_logits.resize(logits.size());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out.grad_logits[c] = std::exp(logits[c] - peak);
    total += out.grad_logits[c];
  }
  out.loss = std::log(total) - (logits[static_cast<std::size_t>(label)] - peak);
  for (double& g : out.grad_logits) g /= total;
  out.grad_logits[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, const ProbeConfig& config) {
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double m_correction = 1.0 - std::pow(config.beta1, t);
  const double v_correction = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / m_correction;
    const double v_hat = state.v[i] / v_correction;
    params[i] = params[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon) -
                config.learning_rate * config.weight_decay * params[i];
  }
}

namespace {

void check_targets(const ProbeTargets& targets, const std::vector<HeadKind>& heads, std::size_t n_rows) {
  for (const HeadKind head : heads) {
    const auto labels = targets.of(head);
    if (labels.empty()) throw PreconditionError("missing " + std::string(to_string(head)) + " labels");
    if (labels.size() != n_rows)
      throw PreconditionError(std::string(to_string(head)) + " labels: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(n_rows) + " rows");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < 0 || labels[i] >= class_count(head))
        throw PreconditionError(std::string(to_string(head)) + " label " + std::to_string(labels[i]) +
                                " out of range at row " + std::to_string(i));
  }
}

// Mean cross-entropy of one head on a gathered batch; gradient written into
// `grad` at the head's offset.
double head_loss(const ProbeParameters& params, std::size_t head, const RowMatrixD& batch, std::span<const int> labels,
                 std::span<const std::size_t> rows, std::span<double> grad) {
  const auto weights = params.weights(head);
  const auto bias = params.bias(head);
  const Eigen::Index classes = weights.rows();
  const auto batch_size = static_cast<double>(batch.rows());

  RowMatrixD logits = batch * weights.transpose();
  logits.rowwise() += bias.transpose();

  RowMatrixD grad_logits(batch.rows(), classes);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const CrossEntropy ce = softmax_cross_entropy(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(classes)),
                                                  labels[rows[static_cast<std::size_t>(r)]]);
    loss += ce.loss;
    for (Eigen::Index c = 0; c < classes; ++c) grad_logits(r, c) = ce.grad_logits[static_cast<std::size_t>(c)] / batch_size;
  }

  const std::size_t off = params.offset(head);
  Eigen::Map<RowMatrixD> grad_weights(grad.data() + off, classes, params.dim());
  Eigen::Map<Eigen::VectorXd> grad_bias(grad.data() + off + static_cast<std::size_t>(classes * params.dim()), classes);
  grad_weights.noalias() = grad_logits.transpose() * batch;
  grad_bias = grad_logits.colwise().sum().transpose();
  return loss / batch_size;
}

RowMatrixD gather(const RowMatrixD& features, std::span<const std::size_t> rows) {
  RowMatrixD out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

LossAndGradient probe_loss(const ProbeParameters& params, const RowMatrixD& features, const ProbeTargets& targets,
                           std::span<const std::size_t> rows) {
  if (features.cols() != params.dim()) throw PreconditionError("feature dim does not match probe dim");
  if (rows.empty()) throw PreconditionError("empty batch");
  check_targets(targets, params.heads(), static_cast<std::size_t>(features.rows()));
  const RowMatrixD batch = gather(features, rows);
  LossAndGradient out;
  out.gradient.assign(params.size(), 0.0);
  for (std::size_t h = 0; h < params.heads().size(); ++h)
    out.loss += head_loss(params, h, batch, targets.of(params.heads()[h]), rows, out.gradient);
  return out;
}

const LinearHead& TrainedProbe::head(HeadKind kind) const {
  for (const auto& h : heads)
    if (h.kind == kind) return h;
  throw PreconditionError("probe has no " + std::string(to_string(kind)) + " head");
}

TrainedProbe train_probe(const RowMatrixD& features, const ProbeTargets& targets, TaskKind task, const ProbeConfig& config) {
  config.validate();
  const auto n_rows = static_cast<std::size_t>(features.rows());
  if (n_rows == 0) throw PreconditionError("no training rows");
  const std::vector<HeadKind> heads = heads_of(task);
  check_targets(targets, heads, n_rows);

  ProbeParameters params(heads, static_cast<int>(features.cols()));
  OptimizerState state(params.size());
  Rng rng(config.seed);
  std::vector<std::size_t> order(n_rows);
  std::vector<double> grad(params.size());

  TrainedProbe probe;
  probe.task = task;
  probe.config = config;
  probe.loss_curve.reserve(static_cast<std::size_t>(config.epochs));

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_rows; start += batch_size) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch_size, n_rows - start));
      const RowMatrixD batch = gather(features, rows);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t h = 0; h < heads.size(); ++h) loss += head_loss(params, h, batch, targets.of(heads[h]), rows, grad);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      adamw_step(params.values(), grad, state, config);
      epoch_loss += loss * static_cast<double>(rows.size());
    }
    probe.loss_curve.push_back(epoch_loss / static_cast<double>(n_rows));
  }

  for (std::size_t h = 0; h < heads.size(); ++h) probe.heads.push_back(params.extract(h));
  return probe;
}

std::vector<int> predict(const LinearHead& head, const RowMatrixD& features) {
  if (features.cols() != head.dim())
    throw PreconditionError("feature dim " + std::to_string(features.cols()) + " does not match head dim " + std::to_string(head.dim()));
  RowMatrixD logits = features * head.weights.transpose();
  logits.rowwise() += head.bias.transpose();
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<std::vector<int>> predict(const TrainedProbe& probe, const RowMatrixD& features) {
  std::vector<std::vector<int>> out;
  for (const auto& head : probe.heads) out.push_back(predict(head, features));
  return out;
}

Standardizer Standardizer::fit(const RowMatrixD& features) {
  Standardizer s;
  s.mean = features.colwise().mean();
  s.scale = Eigen::RowVectorXd::Ones(features.cols());
  if (features.rows() == 0) return s;
  const RowMatrixD centred = features.rowwise() - s.mean;
  const Eigen::RowVectorXd variance = centred.array().square().colwise().sum() / static_cast<double>(features.rows());
  for (Eigen::Index c = 0; c < features.cols(); ++c)
    if (variance(c) > 0.0) s.scale(c) = std::sqrt(variance(c));
  return s;
}

RowMatrixD Standardizer::apply(const RowMatrixD& features) const {
  return ((features.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

}  // namespace layerprobe
