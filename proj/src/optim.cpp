// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/optim.hpp"

#include <cmath>

#include "vsm/errors.hpp"

namespace vsm {

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params) {
    if (p->grad.shape() != p->value.shape()) throw DimensionError("Adam: gradient shape differs for " + p->name);
    auto [it, fresh] = state_.try_emplace(p->name);
    if (fresh) it->second = {Tensor(p->value.shape()), Tensor(p->value.shape())};
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p->value[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }
}

}  // namespace vsm
