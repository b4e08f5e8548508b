// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/gaussian.hpp"

#include <cmath>

#include "vsm/errors.hpp"

namespace vsm {

Tensor GaussianDiag::sigma() const {
  Tensor s(log_var.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(0.5 * log_var[i]);
  return s;
}

void GaussianDiag::validate() const {
  if (mean.shape() != log_var.shape()) throw DimensionError("GaussianDiag: mean/log_var dims differ");
  if (!mean.all_finite() || !log_var.all_finite()) {
    throw EvaluationError("GaussianDiag: non-finite parameters");
  }
}

GaussianVar constant_gaussian(Graph& g, const GaussianDiag& d) {
  return {g.constant(d.mean), g.constant(d.log_var)};
}

Var kl_diag_gauss(const GaussianVar& q, const GaussianVar& p) {
  return kl_diag_gauss(q.mean, q.log_var, p.mean, p.log_var);
}

Var sample_gaussian(const GaussianVar& dist, const Tensor& eps) {
  return sample_gaussian(dist.mean, dist.log_var, eps);
}

Var kl_diag_gauss_pairwise(const GaussianVar& q, const GaussianVar& p) {
  const Tensor& mq = q.mean.value();
  const Tensor& lq = q.log_var.value();
  const Tensor& mp = p.mean.value();
  const Tensor& lp = p.log_var.value();
  if (mq.shape().size() != 2 || mp.shape().size() != 2 || mq.shape() != lq.shape() || mp.shape() != lp.shape() ||
      mq.cols() != mp.cols()) {
    throw DimensionError("kl_diag_gauss_pairwise: shapes " + shape_str(mq.shape()) + " and " +
                         shape_str(mp.shape()));
  }
  const std::size_t K = mq.rows(), Q = mp.rows(), d = mq.cols();
  Tensor out(Shape{Q, K});
  for (std::size_t i = 0; i < Q; ++i)
    for (std::size_t c = 0; c < K; ++c) {
      double kl = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dm = mq.at(c, j) - mp.at(i, j);
        const double dv = lq.at(c, j) - lp.at(i, j);
        kl += std::expm1(dv) - dv + dm * dm * std::exp(-lp.at(i, j));
      }
      out.at(i, c) = 0.5 * kl;
    }
  const std::size_t imq = q.mean.id(), ilq = q.log_var.id(), imp = p.mean.id(), ilp = p.log_var.id();
  Graph& g = *q.mean.graph();
  return g.make(std::move(out), {imq, ilq, imp, ilp}, [=](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& mq = g.value(imq);
    const Tensor& lq = g.value(ilq);
    const Tensor& mp = g.value(imp);
    const Tensor& lp = g.value(ilp);
    Tensor* gmq = g.requires_grad(imq) ? &g.accum(imq) : nullptr;
    Tensor* glq = g.requires_grad(ilq) ? &g.accum(ilq) : nullptr;
    Tensor* gmp = g.requires_grad(imp) ? &g.accum(imp) : nullptr;
    Tensor* glp = g.requires_grad(ilp) ? &g.accum(ilp) : nullptr;
    for (std::size_t i = 0; i < Q; ++i)
      for (std::size_t c = 0; c < K; ++c) {
        const double u = up.at(i, c);
        if (u == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const double dm = mq.at(c, j) - mp.at(i, j);
          const double inv = std::exp(-lp.at(i, j));
          const double em1 = std::expm1(lq.at(c, j) - lp.at(i, j));
          if (gmq) gmq->at(c, j) += u * dm * inv;
          if (gmp) gmp->at(i, j) -= u * dm * inv;
          if (glq) glq->at(c, j) += u * 0.5 * em1;
          if (glp) glp->at(i, j) -= u * 0.5 * (em1 + dm * dm * inv);
        }
      }
  });
}

double kl_diag_gauss(const GaussianDiag& q, const GaussianDiag& p) {
  if (q.mean.shape() != p.mean.shape() || q.log_var.shape() != p.log_var.shape() ||
      q.mean.shape() != q.log_var.shape()) {
    throw DimensionError("kl_diag_gauss: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double d = q.mean[i] - p.mean[i];
    const double dv = q.log_var[i] - p.log_var[i];
    kl += std::expm1(dv) - dv + d * d * std::exp(-p.log_var[i]);
  }
  return 0.5 * kl;
}

Tensor sample_gaussian(const GaussianDiag& dist, const Tensor& eps) {
  if (eps.shape() != dist.mean.shape() || dist.mean.shape() != dist.log_var.shape()) {
    throw DimensionError("sample_gaussian: noise dim differs from distribution dim");
  }
  Tensor out(dist.mean.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = dist.mean[i] + std::exp(0.5 * dist.log_var[i]) * eps[i];
  }
  return out;
}

}  // namespace vsm
