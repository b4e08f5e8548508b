// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace vsm {

// Bad argument values (empty inputs, wrong kinds, zero vectors under cosine).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape or dimension disagreement between operands.
class DimensionError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Non-finite values where a finite number is required.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, inconsistent or corrupted files.
// Non-finite training loss. diagnostic() holds a JSON dump of the episode.
class DivergenceError : public EvaluationError {
 public:
  DivergenceError(const std::string& what, std::string diagnostic)
      : EvaluationError(what), diagnostic_(std::move(diagnostic)) {}
  const std::string& diagnostic() const { return diagnostic_; }

 private:
  std::string diagnostic_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Episode construction could not satisfy its constraints.
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Memory slot lookup for a sense that has no slot.
class AddressingError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace vsm
