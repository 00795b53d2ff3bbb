#include "gradmask/optim.hpp"

#include <cmath>
#include <numbers>

#include "gradmask/errors.hpp"

namespace gradmask {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::WarmupCosine ? "warmup_cosine" : "constant"; }

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "warmup_cosine") return ScheduleKind::WarmupCosine;
  if (name == "constant") return ScheduleKind::Constant;
  throw ConfigError("unknown schedule \"" + name + "\"");
}

double Schedule::lr_at(std::size_t step) const {
  if (kind == ScheduleKind::Constant) return base_lr;
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  const double progress = static_cast<double>(std::min(step, total_steps) - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::for_parameters(const std::vector<NamedParameter>& params, AdamConfig config) {
  OptimizerState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(const std::vector<NamedParameter>& params, OptimizerState& state, double lr) {
  if (params.size() != state.first_moment.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.first_moment.size()) + " tensors, got " +
                        std::to_string(params.size()));
  }
  const AdamConfig& c = state.config;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + p.name);
    }
  }
  double clip_scale = 1.0;
  if (c.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& p : params)
      for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > c.grad_clip) clip_scale = c.grad_clip / norm;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor w = params[k].tensor;
    auto values = w.mutable_values();
    const auto grad = w.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != values.size()) throw ContractError("moment shape mismatch for " + params[k].name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      double g = grad.empty() ? 0.0 : grad[i] * clip_scale;
      if (c.decoupled) {
        values[i] -= lr * c.weight_decay * values[i];
      } else {
        g += c.weight_decay * values[i];
      }
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace gradmask
