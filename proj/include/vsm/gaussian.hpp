// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vsm/autodiff.hpp"
#include "vsm/tensor.hpp"

namespace vsm {

// Diagonal Gaussian parameterised by mean and log-variance.
struct GaussianDiag {
  Tensor mean;
  Tensor log_var;

  std::size_t dim() const { return mean.size(); }
  Tensor sigma() const;
  void validate() const;

  friend bool operator==(const GaussianDiag&, const GaussianDiag&) = default;
};

// Graph-side counterpart of GaussianDiag.
struct GaussianVar {
  Var mean;
  Var log_var;

  GaussianDiag value() const { return {mean.value(), log_var.value()}; }
};

GaussianVar constant_gaussian(Graph& g, const GaussianDiag& d);

Var kl_diag_gauss(const GaussianVar& q, const GaussianVar& p);
Var sample_gaussian(const GaussianVar& dist, const Tensor& eps);

// KL(q_c || p_i) for every pair of rows: q is K x d, p is Q x d, result Q x K.
Var kl_diag_gauss_pairwise(const GaussianVar& q, const GaussianVar& p);

// Plain-value versions without a graph.
double kl_diag_gauss(const GaussianDiag& q, const GaussianDiag& p);
Tensor sample_gaussian(const GaussianDiag& dist, const Tensor& eps);

}  // namespace vsm
