// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Variational prototype network: per-class Gaussian prototypes inferred from
// the pooled support feature, query-conditioned priors, and a Monte Carlo
// cross-entropy objective.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vsm/encoders.hpp"
#include "vsm/episodes.hpp"
#include "vsm/gaussian.hpp"
#include "vsm/nn.hpp"
#include "vsm/noise.hpp"

namespace vsm {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Three-layer amortized Gaussian: in -> hidden (ELU) -> hidden (ELU), then
// linear mean and log-variance heads. An optional side input enters the
// first layer through its own weight block. When in_dim == out_dim the mean
// head is a residual on the main input: mean = x + W h + b.
struct GaussianNet {
  std::string name;
  std::size_t in_dim = 0;
  std::size_t side_dim = 0;
  std::size_t hidden = 0;
  std::size_t out_dim = 0;

  static GaussianNet create(ParamStore& store, std::uint64_t seed, const std::string& name, std::size_t in_dim,
                            std::size_t side_dim, std::size_t hidden, std::size_t out_dim);
  // x is a vector or a matrix of row inputs; side must match its rank.
  GaussianVar operator()(Graph& g, ParamStore& store, Var x, std::optional<Var> side = std::nullopt) const;
};

struct InferenceNets {
  std::size_t feature_dim = 0;
  std::size_t memory_dim = 0;  // 0 when the posterior has no memory input
  std::size_t z_dim = 0;
  ParamStore store;
  GaussianNet posterior;
  GaussianNet prior;
};

InferenceNets init_inference_nets(std::size_t feature_dim, std::size_t memory_dim, std::uint64_t seed);

GaussianVar infer_posterior_z(Graph& g, InferenceNets& nets, Var pooled, std::optional<Var> memory = std::nullopt);
GaussianVar infer_prior_z(Graph& g, InferenceNets& nets, Var query);

struct VpnHyper {
  double lambda = 1e-3;
  std::size_t L_z = 150;
  void validate() const;
};

// eps[l] is a K x d matrix of standard normals for prototype sample l.
using NoiseBank = std::vector<Tensor>;

// Row c of eps[l] is keyed by (prototype stream, l, c), so a class keeps its
// noise when other classes are added.
NoiseBank draw_prototype_noise(const NoiseKey& key, std::size_t L, std::size_t K, std::size_t d);

// Per-query (1/L) sum_l -log softmax(-||x_i - z_l||^2)[y_i] with
// z_l = mean + exp(log_var / 2) * eps[l]. Returns a length-Q vector.
Var sampled_prototype_nll(const GaussianVar& protos, Var queries, const std::vector<std::size_t>& labels,
                          const NoiseBank& eps);
// Per-query mean over samples of the class distribution.
std::vector<Tensor> sampled_prototype_probs(const GaussianDiag& protos, const std::vector<Tensor>& queries,
                                            const NoiseBank& eps);

// (1/|Q|) sum_i [nll_i + lambda sum_c KL(q_c || p_i)]. `priors` holds one
// row per query and may be omitted when lambda is 0.
Var vpn_objective(const GaussianVar& posteriors, Var queries, const std::vector<std::size_t>& labels,
                  const std::optional<GaussianVar>& priors, double lambda, const NoiseBank& eps);

Var vpn_loss(Graph& g, EncoderParams& enc, InferenceNets& nets, const Episode& ep, const VpnHyper& hyper,
             const NoiseKey& key);

std::vector<Tensor> predict_vpn(EncoderParams& enc, InferenceNets& nets, const Episode& ep, std::size_t L_z,
                                const NoiseKey& key);
std::vector<Tensor> predict_vpn(EncoderParams& enc, InferenceNets& nets, const Episode& ep, const NoiseBank& eps);

// Labels of an episode's query set.
std::vector<std::size_t> query_labels(const Episode& ep);

}  // namespace vsm
