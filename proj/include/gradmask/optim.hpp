#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gradmask/model.hpp"

namespace gradmask {

enum class ScheduleKind { WarmupCosine, Constant };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Linear warmup to base_lr, then cosine decay to 0 at total_steps.
struct Schedule {
  ScheduleKind kind = ScheduleKind::WarmupCosine;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double base_lr = 1e-3;

  double lr_at(std::size_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  /// true: AdamW (decay applied to the weights directly).
  /// false: classic Adam with L2 added to the gradient.
  bool decoupled = true;
  /// Global-norm clipping threshold; 0 disables.
  double grad_clip = 0.0;
};

struct OptimizerState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  /// Zero moments shaped like `params`.
  static OptimizerState for_parameters(const std::vector<NamedParameter>& params, AdamConfig config);
};

/// One bias-corrected Adam(W) update at learning rate `lr`. Parameters
/// without an accumulated gradient are treated as having zero gradient.
/// Throws NumericalError naming the first parameter with a non-finite gradient.
void adamw_step(const std::vector<NamedParameter>& params, OptimizerState& state, double lr);

}  // namespace gradmask
