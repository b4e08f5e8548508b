// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Variational semantic memory.
//
// Recall: for each class, attention over occupied slots (dot product with the
// pooled support feature) defines a Gaussian mixture q(m | M, S) whose
// components come from g_psi_post applied to slot rows. Memory samples feed
// the prototype posterior q(z | S, m), and the objective adds a Monte Carlo
// KL between the mixture and the support-conditioned prior p(m | S).
//
// Update: graph attention over {M_c} plus the class features gives M_bar_c,
// then M_c <- beta M_c + (1 - beta) M_bar_c followed by M_c / max(1, |M_c|).
// beta is either a constant or the output of the hypernetwork f_beta.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsm/corpus.hpp"
#include "vsm/encoders.hpp"
#include "vsm/episodes.hpp"
#include "vsm/gaussian.hpp"
#include "vsm/nn.hpp"
#include "vsm/noise.hpp"
#include "vsm/vpn.hpp"

namespace vsm {

class MemoryStore {
 public:
  MemoryStore() = default;
  // One zero, unoccupied slot per sense, in sorted sense_id order.
  static MemoryStore for_inventory(const SenseInventory& inventory, std::size_t dim);

  std::size_t size() const { return senses_.size(); }
  std::size_t dim() const { return slots_.cols(); }
  const Tensor& slots() const { return slots_; }
  const std::vector<std::string>& senses() const { return senses_; }
  const std::vector<bool>& occupied() const { return occupied_; }
  bool has_slot(const std::string& sense_id) const { return index_.count(sense_id) > 0; }
  // Throws AddressingError for an unknown sense.
  std::size_t slot_of(const std::string& sense_id) const;
  std::vector<std::size_t> occupied_rows() const;
  std::size_t num_occupied() const;

  Tensor row(std::size_t r) const { return slots_.row(r); }
  void set_row(std::size_t r, const Tensor& value);

  // Restores a snapshot; rows must be finite with norm <= 1.
  static MemoryStore from_parts(std::vector<std::string> senses, Tensor slots, std::vector<bool> occupied);

  friend bool operator==(const MemoryStore&, const MemoryStore&) = default;

 private:
  std::vector<std::string> senses_;
  std::map<std::string, std::size_t> index_;
  Tensor slots_;
  std::vector<bool> occupied_;
};

// Memory-side networks: g_psi (posterior from a slot row, prior from the
// pooled support feature), single-head graph attention, and f_beta.
struct MemoryNets {
  std::size_t dim = 0;
  ParamStore store;
  GaussianNet m_post;
  GaussianNet m_prior;

  static constexpr double kLeakySlope = 0.2;
  // f_beta logits are clamped here so beta stays strictly inside (0, 1).
  static constexpr double kBetaLogitBound = 30.0;
};

MemoryNets init_memory_nets(std::size_t dim, std::uint64_t seed);

struct VsmNets {
  InferenceNets z;  // posterior takes [pooled; m]
  MemoryNets memory;

  std::vector<Param*> params();
};

VsmNets init_vsm_nets(std::size_t dim, std::uint64_t seed);

// ---- recall ------------------------------------------------------------------

// gamma over all slots for one pooled feature; unoccupied slots get exactly
// 0. Empty when no slot is occupied.
std::optional<Tensor> recall_attention(const MemoryStore& memory, const Tensor& pooled);
// Row-wise attention logits -> log gamma (K x n) over the given slot rows.
Var recall_log_attention(Var slot_rows, Var pooled);

struct MemoryPosterior {
  GaussianVar components;                          // n x d, one per slot row
  Var log_gamma;                                   // K x n
  std::vector<Var> samples;                        // L_m entries, each K x d
  std::vector<std::vector<std::size_t>> chosen;    // [l][c] component index
};

// Draws L_m samples per class: a component index from gamma (memory
// component stream), then a reparameterized draw from that component
// (memory stream), both keyed by (class, l).
MemoryPosterior memory_posterior(Graph& g, MemoryNets& nets, Var slot_rows, Var log_gamma, std::size_t L_m,
                                 const NoiseKey& key);
GaussianVar memory_prior(Graph& g, MemoryNets& nets, Var pooled);
// Meta-test path: L_m samples per class from p(m | S), same keys as above.
std::vector<Var> meta_test_memory_path(Graph& g, MemoryNets& nets, Var pooled, std::size_t L_m, const NoiseKey& key);

// log sum_a gamma_a N(m; mu_a, sigma_a^2).
Var mixture_log_density(Var m, const GaussianVar& components, Var log_gamma);
// Same for each row of an L x d sample matrix (length L).
Var mixture_log_density_rows(Var samples, const GaussianVar& components, Var log_gamma);

// Per-class (1/L_m) sum_l [log q_mix(m_l) - log p(m_l | S)] (length K).
Var memory_kl_estimate(const MemoryPosterior& post, const GaussianVar& prior);

// One K x d prototype posterior per memory sample.
std::vector<GaussianVar> posterior_z_given_memory(Graph& g, InferenceNets& nets, Var pooled,
                                                  const std::vector<Var>& samples);

// ---- update ------------------------------------------------------------------

struct UpdateCandidate {
  Var mbar;   // d
  Var alpha;  // attention over [anchor, features...]
};

UpdateCandidate graph_attention_aggregate(Graph& g, MemoryNets& nets, Var anchor, const std::vector<Var>& features);

enum class BetaMode { adaptive, fixed };

struct BetaConfig {
  BetaMode mode = BetaMode::adaptive;
  double value = 0.5;  // used when fixed
  void validate() const;
};

// f_beta(M_bar) in (0, 1), or the constant in fixed mode. Rank-0 result.
Var adaptive_beta(Graph& g, MemoryNets& nets, Var mbar, const BetaConfig& cfg = {});

// M_c <- clip(beta M_c + (1 - beta) M_bar), or clip(M_bar) for a first write.
void update_memory(MemoryStore& memory, const std::string& sense_id, const Tensor& mbar, double beta);
// In-graph version used by the look-ahead recall.
Var prospective_slot(Var current, bool occupied, Var mbar, Var beta);

// ---- objective ---------------------------------------------------------------

struct VsmHyper {
  double lambda_z = 1e-3;
  double lambda_m = 1e-3;
  std::size_t L_z = 150;
  std::size_t L_m = 150;
  // Recall from slots updated in-graph with this episode's support features,
  // so graph attention and f_beta receive gradients.
  bool lookahead = true;
  void validate() const;
};

// sum_i [ (1/L_m) sum_l nll_l(i) + lambda_z (1/L_m) sum_l sum_c KL(q_lc || p_i) ]
//   + |Q| lambda_m sum_c KL_m(c)
Var vsm_objective(const std::vector<GaussianVar>& z_posteriors, Var queries, const std::vector<std::size_t>& labels,
                  const std::optional<GaussianVar>& z_priors, const std::optional<Var>& memory_kl,
                  const VsmHyper& hyper, const NoiseBank& eps);

struct VsmForward {
  Var loss;
  bool recalled = false;  // false when the prior path was used
  // Per episode class: encoded support and query features, for the commit.
  std::vector<std::vector<Tensor>> class_features;
};

VsmForward vsm_forward(Graph& g, EncoderParams& enc, VsmNets& nets, const MemoryStore& memory, const Episode& ep,
                       const VsmHyper& hyper, const BetaConfig& beta, const NoiseKey& key);
Var vsm_loss(Graph& g, EncoderParams& enc, VsmNets& nets, const MemoryStore& memory, const Episode& ep,
             const VsmHyper& hyper, const BetaConfig& beta, const NoiseKey& key);

// Writes every episode class into memory from its support and query
// features. Returns the beta used per class.
std::vector<double> commit_episode(MemoryStore& memory, VsmNets& nets, const Episode& ep,
                                   const std::vector<std::vector<Tensor>>& class_features, const BetaConfig& beta);

// Meta-test prediction through the prior memory path; memory is not read.
std::vector<Tensor> predict_vsm(EncoderParams& enc, VsmNets& nets, const Episode& ep, std::size_t L_z,
                                std::size_t L_m, const NoiseKey& key);

}  // namespace vsm
