#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradmask/tensor.hpp"

namespace gradmask {

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::vector<double> per_param;  // max error within each parameter tensor
};

/// Compares reverse-mode gradients of `f` with central differences of step
/// `h`, parameter by parameter. The error per entry is
/// |ad - fd| / max(1, |ad|, |fd|). Parameters are restored afterwards.
/// Throws NumericalError if f is non-finite at a probe.
GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> params, double h = 1e-6);

}  // namespace gradmask
