// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Sentence encoders f_theta: token embeddings in, a d-dimensional
// representation of the target token out.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsm/autodiff.hpp"
#include "vsm/corpus.hpp"
#include "vsm/nn.hpp"

namespace vsm {

enum class EncoderArch { bigru_linear, mlp, linear };

EncoderArch parse_encoder_arch(const std::string& name);
std::string to_string(EncoderArch a);

struct EncoderParams {
  EncoderArch arch = EncoderArch::linear;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  // Output activation: tanh for bigru_linear, relu for mlp, configurable for
  // linear.
  Activation act = Activation::identity;
  ParamStore store;

  void validate() const;
};

// Parameter names are prefixed with "enc.".
EncoderParams init_encoder(EncoderArch arch, std::size_t input_dim, std::size_t output_dim,
                           std::uint64_t seed);
EncoderParams init_encoder(EncoderArch arch, std::size_t input_dim, std::size_t output_dim,
                           Activation act, std::uint64_t seed);

Var encode(Graph& g, EncoderParams& params, const SentenceRecord& rec);
// Graph-free convenience wrapper.
Tensor encode(EncoderParams& params, const SentenceRecord& rec);

// Per-class instance pooling. Throws ArgumentError for an empty group.
Var mean_support_representation(const std::vector<Var>& reps);
Tensor mean_support_representation(const std::vector<Tensor>& reps);

}  // namespace vsm
