// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/noise.hpp"

#include <cmath>
#include <numbers>

namespace vsm {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return splitmix64(seed ^ (splitmix64(value) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

std::uint64_t hash_string(const std::string& s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double NoiseKey::uniform(std::uint64_t counter) const {
  // 53 random bits mapped to the centre of their bucket: never 0 or 1.
  const std::uint64_t b = bits(counter) >> 11;
  return (static_cast<double>(b) + 0.5) * 0x1.0p-53;
}

double NoiseKey::normal(std::uint64_t counter) const {
  // Box-Muller using two decorrelated uniforms from the same counter.
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor NoiseKey::normals(Shape shape) const {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(i);
  return t;
}

}  // namespace vsm
