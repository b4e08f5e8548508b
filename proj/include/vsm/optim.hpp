// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vsm/autodiff.hpp"

namespace vsm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment state is keyed by parameter name so it survives checkpointing.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from each parameter's accumulated grad.
  void step(const std::vector<Param*>& params);

  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  std::uint64_t steps() const { return t_; }

  struct Moments {
    Tensor m;
    Tensor v;
  };
  const std::map<std::string, Moments>& state() const { return state_; }
  void restore(std::uint64_t steps, std::map<std::string, Moments> state) {
    t_ = steps;
    state_ = std::move(state);
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace vsm
