// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/nn.hpp"

#include <cmath>

#include "vsm/errors.hpp"
#include "vsm/noise.hpp"

namespace vsm {

ParamStore::ParamStore(const ParamStore& other) : params_(other.params_) {}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  params_ = other.params_;
  return *this;
}

Param& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ArgumentError("duplicate parameter " + name);
  params_.emplace_back(name, std::move(value));
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ArgumentError("unknown parameter " + name);
}

const Param& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

bool ParamStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

void ParamStore::assign(const ParamStore& other) {
  for (const auto* src : other.all()) {
    Param& dst = at(src->name);
    if (dst.value.shape() != src->value.shape()) {
      throw DimensionError("parameter " + src->name + " has shape " + shape_str(src->value.shape()) +
                           ", expected " + shape_str(dst.value.shape()));
    }
    dst.value = src->value;
  }
}

Tensor glorot_uniform(std::uint64_t seed, const std::string& name, std::size_t fan_out, std::size_t fan_in,
                      double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  const NoiseKey key = NoiseKey(seed).with(NoiseStream::init).with(hash_string(name));
  Tensor w(Shape{fan_out, fan_in});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = limit * (2.0 * key.uniform(i) - 1.0);
  return w;
}

Dense Dense::create(ParamStore& store, std::uint64_t seed, const std::string& name, std::size_t in,
                    std::size_t out, Activation act, double gain) {
  Dense d;
  d.weight = &store.add(name + ".W", glorot_uniform(seed, name + ".W", out, in, gain));
  d.bias = &store.add(name + ".b", Tensor(Shape{out}));
  d.act = act;
  return d;
}

Dense Dense::bind(ParamStore& store, const std::string& name, Activation act) {
  Dense d;
  d.weight = &store.at(name + ".W");
  d.bias = &store.at(name + ".b");
  d.act = act;
  return d;
}

Var Dense::operator()(Graph& g, Var x) const {
  if (x.shape().size() != 1 || x.size() != in_dim()) {
    throw DimensionError(weight->name + ": input shape " + shape_str(x.shape()) + ", expected [" +
                         std::to_string(in_dim()) + "]");
  }
  return activation(act, add(matvec(g.param(*weight), x), g.param(*bias)));
}

Var Dense::rows(Graph& g, Var x) const {
  if (x.shape().size() != 2 || x.shape()[1] != in_dim()) {
    throw DimensionError(weight->name + ": input shape " + shape_str(x.shape()) + ", expected [n, " +
                         std::to_string(in_dim()) + "]");
  }
  return activation(act, add_row_broadcast(matmul(x, transpose(g.param(*weight))), g.param(*bias)));
}

}  // namespace vsm
