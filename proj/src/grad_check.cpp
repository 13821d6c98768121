#include "evc/grad_check.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "evc/error.hpp"

namespace evc {
namespace {

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite ") + what);
  return v;
}

void consider(GradCheckResult& r, std::size_t index, double analytic, double numeric) {
  const double err = std::abs(analytic - numeric) / (1.0 + std::abs(numeric));
  ++r.checked;
  if (err > r.max_rel_error || r.checked == 1) {
    r.max_rel_error = err;
    r.worst_index = index;
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

}  // namespace

GradCheckResult grad_check(const DifferentiableFn& f, std::span<const double> point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");
  std::vector<double> p(point.begin(), point.end());
  std::vector<double> analytic(p.size(), 0.0);
  finite_or_throw(f(p, analytic), "value at the base point");
  GradCheckResult result;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = finite_or_throw(f(p, {}), "value");
    p[i] = saved - step;
    const double down = finite_or_throw(f(p, {}), "value");
    p[i] = saved;
    consider(result, i, analytic[i], (up - down) / (2.0 * step));
  }
  return result;
}

GradCheckResult grad_check_params(const std::function<double(bool)>& loss,
                                  std::span<const ParamRef> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");
  finite_or_throw(loss(true), "loss at the base point");
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  GradCheckResult result;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].value.size(); ++i, ++flat) {
      double& v = params[k].value[i];
      const double saved = v;
      v = saved + step;
      const double up = finite_or_throw(loss(false), "loss");
      v = saved - step;
      const double down = finite_or_throw(loss(false), "loss");
      v = saved;
      consider(result, flat, analytic[k][i], (up - down) / (2.0 * step));
      if (result.worst_index == flat) {
        result.worst_name = params[k].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace evc
