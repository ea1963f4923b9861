#include "fedfusion/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace fedfusion {

GradCheckReport grad_check(const ValueAndGrad& f, const ParamVector& point, double tol) {
  auto [value, analytic] = f(point);
  (void)value;
  GradCheckReport report;
  report.tol = tol;
  ParamVector probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    double h = 1e-5 * (std::fabs(point[i]) + 1.0);
    probe.v[i] = point[i] + h;
    double up = f(probe).first;
    probe.v[i] = point[i] - h;
    double down = f(probe).first;
    probe.v[i] = point[i];
    double numeric = (up - down) / (2.0 * h);
    double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1.0});
    double rel = std::fabs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace fedfusion
