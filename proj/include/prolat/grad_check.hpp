#pragma once

#include <functional>
#include <string>

#include "prolat/param_store.hpp"

namespace prolat {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of the gradients currently stored in `store`
// against `loss_fn`, which must be a pure function of the parameter values.
// Relative error uses max(|analytic|, |numeric|, floor) as denominator.
inline GradCheckReport grad_check(ParamStore& store,
                                  const std::function<double()>& loss_fn,
                                  double h = 1e-5, double floor = 1e-6) {
  GradCheckReport rep;
  for (auto& [name, p] : store.all()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + h;
      const double lp = loss_fn();
      p.value.data[i] = saved - h;
      const double lm = loss_fn();
      p.value.data[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = p.grad.data[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
      const double rel = std::fabs(analytic - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.analytic = analytic;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace prolat
