#include "gradmask/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gradmask/errors.hpp"

namespace gradmask {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  const double v = f().item();
  if (!std::isfinite(v)) throw NumericalError("gradcheck: function is not finite at the probe point");
  return v;
}

}  // namespace

GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> params, double h) {
  if (!(h > 0.0)) throw ParameterError("gradcheck: step must be positive");
  for (auto& p : params) {
    if (!p.requires_grad()) throw ContractError("gradcheck: parameter does not require grad");
    p.zero_grad();
  }
  Tensor loss = f();
  if (!std::isfinite(loss.item())) throw NumericalError("gradcheck: function is not finite at the probe point");
  loss.backward();

  GradcheckResult result;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    double worst = 0.0;
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = eval_scalar(f);
      vals[i] = orig - h;
      const double down = eval_scalar(f);
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    result.per_param.push_back(worst);
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  return result;
}

}  // namespace gradmask
