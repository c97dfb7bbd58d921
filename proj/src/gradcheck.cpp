#include "linkdist/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace linkdist {

GradCheckReport grad_check(const LossClosure& loss_fn, const ParamList<double>& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  zero_grads(params);
  const double base = loss_fn(true);
  const double again = loss_fn(false);
  if (base != again) {
    throw Error(ErrorCode::kDeterminism, "grad_check: closure is not deterministic (" + std::to_string(base) +
                                             " vs " + std::to_string(again) + ")");
  }

  for (ParamTensor<double>* p : params) {
    const size_t n = p->value.size();
    const size_t stride = std::max<size_t>(1, n / options.max_entries_per_param);
    for (size_t k = 0; k < n; k += stride) {
      double& w = p->value.data()[k];
      const double saved = w;
      w = saved + options.step;
      const double up = loss_fn(false);
      w = saved - options.step;
      const double down = loss_fn(false);
      w = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad.data()[k];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), options.abs_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++report.entries_checked;
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        report.worst_param = p->name;
      }
    }
  }
  zero_grads(params);
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace linkdist
