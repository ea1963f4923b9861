#pragma once

#include <cstddef>
#include <functional>
#include <utility>

#include "fedfusion/param_vector.hpp"

namespace fedfusion {

// Value and analytic gradient at a point.
using ValueAndGrad = std::function<std::pair<double, ParamVector>(const ParamVector&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central finite differences, h = 1e-5 * (|theta_i| + 1) per coordinate.
// Relative error uses denominator max(|analytic|, |numeric|, 1).
GradCheckReport grad_check(const ValueAndGrad& f, const ParamVector& point, double tol);

}  // namespace fedfusion
