// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Finite-difference gradient suites over the three training losses on a
// d = 4, two-class instance with fixed noise.

#pragma once

#include <string>
#include <vector>

#include "vsm/gradcheck.hpp"

namespace vsm {

struct GradientSuite {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

std::vector<GradientSuite> run_gradient_suites(double tolerance = 1e-4);

}  // namespace vsm
