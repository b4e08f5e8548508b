// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vsm/autodiff.hpp"

namespace vsm {

struct GradCheckReport {
  bool passed = true;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  // Worst coordinate; only meaningful when coordinates > 0.
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // First coordinate that exceeded the tolerance, if any.
  std::string failed_param;
  std::size_t failed_index = 0;

  std::string summary() const;
};

// Builds the scalar objective on a fresh graph. Must be deterministic for
// fixed parameter values (noise drawn from fixed keys).
using Objective = std::function<Var(Graph&)>;

// Hook that lets tests tamper with analytic gradients before comparison.
using GradientFilter = std::function<void(std::vector<Param*>&)>;

// Compares reverse-mode gradients with central differences:
// |analytic - numeric| / max(1, |analytic|) <= tolerance for every coordinate.
GradCheckReport grad_check(const Objective& objective, const std::vector<Param*>& params,
                           double step = 1e-5, double tolerance = 1e-4,
                           const GradientFilter& filter = {});

}  // namespace vsm
