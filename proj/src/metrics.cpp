#include "gradmask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradmask/errors.hpp"
#include "gradmask/ops.hpp"

namespace gradmask {

double accuracy(std::span<const double> logits, std::size_t classes, std::span<const std::size_t> labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data() + i * classes;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    correct += best == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::optional<double> auroc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: score/label count mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Metrics compute_metrics(std::span<const double> predictions, std::size_t width, std::span<const std::size_t> labels,
                        std::span<const double> targets, const TaskSpec& task) {
  for (double p : predictions) {
    if (!std::isfinite(p)) throw NumericalError("non-finite prediction");
  }
  Metrics m;
  if (task.is_classification()) {
    const std::size_t rows = labels.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* row = predictions.data() + i * width;
      const double mx = *std::max_element(row, row + width);
      double z = 0.0;
      for (std::size_t c = 0; c < width; ++c) z += std::exp(row[c] - mx);
      loss += mx + std::log(z) - row[labels[i]];
    }
    m.loss = rows ? loss / static_cast<double>(rows) : 0.0;
    m.accuracy = accuracy(predictions, width, labels);
    if (width == 2) {
      std::vector<double> scores(rows);
      for (std::size_t i = 0; i < rows; ++i) scores[i] = predictions[i * 2 + 1] - predictions[i * 2];
      m.auroc = auroc(scores, labels);
    }
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) total += std::abs(predictions[i] - targets[i]);
    m.loss = targets.empty() ? 0.0 : total / static_cast<double>(targets.size());
    m.mae = m.loss;
  }
  return m;
}

LossAndMetrics loss_and_metrics(const Tensor& predictions, const GraphBatch& batch, const TaskSpec& task) {
  LossAndMetrics out;
  if (task.is_classification()) {
    out.loss = cross_entropy(predictions, batch.class_labels);
  } else {
    out.loss = mean_abs_error(predictions, batch.targets);
  }
  out.metrics = compute_metrics(predictions.values(), predictions.dim(1), batch.class_labels, batch.targets, task);
  return out;
}

SelectionMetric selection_metric(const std::string& requested, const TaskSpec& task) {
  std::string name = requested;
  if (name == "auto") name = task.is_classification() ? "accuracy" : "mae";
  if (name == "accuracy" || name == "auroc") {
    if (!task.is_classification()) throw ConfigError("train.select_metric " + name + " needs a classification task");
    if (name == "auroc" && task.num_classes != 2) throw ConfigError("train.select_metric auroc needs a binary task");
    return {name, true};
  }
  if (name == "mae") {
    if (task.is_classification()) throw ConfigError("train.select_metric mae needs a regression task");
    return {name, false};
  }
  if (name == "loss") return {name, false};
  throw ConfigError("unknown train.select_metric \"" + requested + "\"");
}

std::optional<double> metric_value(const Metrics& m, const std::string& name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "auroc") return m.auroc;
  if (name == "mae") return m.mae;
  if (name == "loss") return m.loss;
  return std::nullopt;
}

}  // namespace gradmask
