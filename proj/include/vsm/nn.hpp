// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Named parameter storage and dense layers shared by every network.

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "vsm/autodiff.hpp"

namespace vsm {

// Parameters keep stable addresses for the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param& add(const std::string& name, Tensor value);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;

  void zero_grad();
  bool all_finite() const;
  // Copies values from a store with the same names and shapes.
  void assign(const ParamStore& other);

 private:
  std::deque<Param> params_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)), keyed by (seed, name).
Tensor glorot_uniform(std::uint64_t seed, const std::string& name, std::size_t fan_out, std::size_t fan_in,
                      double gain = 1.0);

struct Dense {
  Param* weight = nullptr;  // out x in
  Param* bias = nullptr;    // out
  Activation act = Activation::identity;

  static Dense create(ParamStore& store, std::uint64_t seed, const std::string& name, std::size_t in,
                      std::size_t out, Activation act, double gain = 1.0);
  // Rebinds to existing parameters by name.
  static Dense bind(ParamStore& store, const std::string& name, Activation act);

  std::size_t in_dim() const { return weight->value.cols(); }
  std::size_t out_dim() const { return weight->value.rows(); }
  Var operator()(Graph& g, Var x) const;
  // Row-wise application to an n x in matrix.
  Var rows(Graph& g, Var x) const;
  // Dispatches on the rank of x.
  Var apply(Graph& g, Var x) const { return x.shape().size() == 2 ? rows(g, x) : (*this)(g, x); }
};

}  // namespace vsm
