#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradmask/batch.hpp"
#include "gradmask/graph.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask {

struct Metrics {
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> auroc;  // binary classification only
  std::optional<double> mae;    // regression only
};

struct LossAndMetrics {
  Tensor loss;
  Metrics metrics;
};

/// Cross-entropy for classification, mean absolute error for regression.
/// Throws NumericalError on non-finite predictions.
LossAndMetrics loss_and_metrics(const Tensor& predictions, const GraphBatch& batch, const TaskSpec& task);

/// Metrics from raw predictions (rows of logits or scalar outputs) gathered
/// over a whole split.
Metrics compute_metrics(std::span<const double> predictions, std::size_t width, std::span<const std::size_t> labels,
                        std::span<const double> targets, const TaskSpec& task);

double accuracy(std::span<const double> logits, std::size_t classes, std::span<const std::size_t> labels);

/// Rank-based AUROC with tied scores given their average rank. nullopt when
/// one class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const std::size_t> labels);

/// Metric used for model selection and how to compare it.
struct SelectionMetric {
  std::string name;  // accuracy | auroc | mae | loss
  bool higher_is_better = true;
};

SelectionMetric selection_metric(const std::string& requested, const TaskSpec& task);
std::optional<double> metric_value(const Metrics& m, const std::string& name);

}  // namespace gradmask
