#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "evc/params.hpp"

namespace evc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;   // at worst_index
  std::size_t checked = 0;
  std::string worst_name;  // parameter name, for grad_check_params
};

/// f(p, grad) returns the scalar value at p and, when `grad` is non-empty,
/// writes the analytic gradient into it.
using DifferentiableFn = std::function<double(std::span<const double> p, std::span<double> grad)>;

/// Max over coordinates of |analytic - central difference| / (1 + |central difference|).
/// Throws std::invalid_argument for step <= 0 and NumericError on a non-finite evaluation.
GradCheckResult grad_check(const DifferentiableFn& f, std::span<const double> point,
                           double step = 1e-6);

/// Same metric over parameters owned elsewhere. `loss(true)` must refresh the
/// gradient buffers of `params`; `loss(false)` only evaluates. Values are
/// perturbed in place and restored.
GradCheckResult grad_check_params(const std::function<double(bool want_grad)>& loss,
                                  std::span<const ParamRef> params, double step = 1e-6);

}  // namespace evc
