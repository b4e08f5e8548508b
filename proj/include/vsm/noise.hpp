// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Counter-based random numbers: every draw is a pure function of a key, so
// any loss value can be recomputed exactly from (seed, episode, sample index)
// without replaying a stream.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

#include "vsm/tensor.hpp"

namespace vsm {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
std::uint64_t hash_string(const std::string& s);

// Stream tags keep independent uses of the same episode key apart.
enum class NoiseStream : std::uint64_t {
  prototype_z = 1,
  memory_m = 2,
  memory_component = 3,
  init = 4,
  sampler = 5,
  synth = 6,
  train = 7,
  eval = 8,
  permutation = 9,
};

class NoiseKey {
 public:
  explicit NoiseKey(std::uint64_t seed) : state_(splitmix64(seed)) {}

  NoiseKey with(std::uint64_t v) const {
    NoiseKey k = *this;
    k.state_ = hash_combine(state_, v);
    return k;
  }
  NoiseKey with(NoiseStream s) const { return with(static_cast<std::uint64_t>(s)); }
  NoiseKey with(std::initializer_list<std::uint64_t> vs) const {
    NoiseKey k = *this;
    for (auto v : vs) k = k.with(v);
    return k;
  }

  std::uint64_t bits(std::uint64_t counter) const { return splitmix64(hash_combine(state_, counter)); }
  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  double normal(std::uint64_t counter) const;
  // Tensor of independent standard normals.
  Tensor normals(Shape shape) const;
  // Seeded engine for samplers that need std algorithms.
  std::mt19937_64 engine() const { return std::mt19937_64(bits(0x5eed)); }
  std::uint64_t raw() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace vsm
