// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "vsm/errors.hpp"

namespace vsm {

namespace {

double evaluate(const Objective& objective) {
  Graph g;
  const double v = objective(g).item();
  if (!std::isfinite(v)) throw EvaluationError("grad_check: objective is not finite");
  return v;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " coords=" << coordinates << " max_rel=" << max_rel_error;
  if (coordinates > 0) {
    os << " worst=" << worst_param << "[" << worst_index << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  }
  if (!passed) os << " first_failure=" << failed_param << "[" << failed_index << "]";
  return os.str();
}

GradCheckReport grad_check(const Objective& objective, const std::vector<Param*>& params,
                           double step, double tolerance, const GradientFilter& filter) {
  for (Param* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = objective(g);
    if (!std::isfinite(loss.item())) throw EvaluationError("grad_check: objective is not finite");
    g.backward(loss);
  }
  std::vector<Param*> touched = params;
  if (filter) filter(touched);

  GradCheckReport report;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = evaluate(objective);
      p->value[i] = orig - step;
      const double down = evaluate(objective);
      p->value[i] = orig;

      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++report.coordinates;
      if (rel > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_param = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
      if (rel > tolerance && report.passed) {
        report.passed = false;
        report.failed_param = p->name;
        report.failed_index = i;
      }
    }
  }
  return report;
}

}  // namespace vsm
