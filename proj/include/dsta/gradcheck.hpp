#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "dsta/errors.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

inline double gradcheck_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Central-difference check of every scalar in `params`.
//
// `loss()` evaluates the scalar loss at the current parameter values.
// `compute_grads()` must zero and then fill every ParamTensor::grad with the
// analytic gradient of that same loss.
template <class LossFn, class GradFn>
GradcheckReport gradcheck(LossFn&& loss, GradFn&& compute_grads,
                          std::span<ParamTensor* const> params, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ConfigError("gradcheck: step h must be positive and finite");
  }
  compute_grads();
  GradcheckReport report;
  for (ParamTensor* p : params) {
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = loss();
      p->value[i] = saved - h;
      const double down = loss();
      p->value[i] = saved;
      const double analytic = p->grad[i];
      const double numeric = (up - down) / (2.0 * h);
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic)) {
        throw NumericError("gradcheck: non-finite value while perturbing " + p->name + "[" +
                           std::to_string(i) + "]");
      }
      const double err = gradcheck_rel_error(analytic, numeric);
      ++report.checked;
      if (report.checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace dsta
