// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/vsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "vsm/errors.hpp"
#include "vsm/protonet.hpp"

namespace vsm {

// ---- MemoryStore ------------------------------------------------------------

MemoryStore MemoryStore::for_inventory(const SenseInventory& inventory, std::size_t dim) {
  if (dim == 0) throw ConfigError("memory dim must be positive");
  std::vector<std::string> senses;
  for (const auto& [w, ss] : inventory) senses.insert(senses.end(), ss.begin(), ss.end());
  std::sort(senses.begin(), senses.end());
  senses.erase(std::unique(senses.begin(), senses.end()), senses.end());
  const std::size_t n = senses.size();
  return from_parts(std::move(senses), Tensor(Shape{n, dim}), std::vector<bool>(n, false));
}

MemoryStore MemoryStore::from_parts(std::vector<std::string> senses, Tensor slots, std::vector<bool> occupied) {
  if (slots.shape().size() != 2 || slots.rows() != senses.size() || occupied.size() != senses.size()) {
    throw DimensionError("memory snapshot: " + std::to_string(senses.size()) + " senses, slots " +
                         shape_str(slots.shape()) + ", " + std::to_string(occupied.size()) + " occupancy flags");
  }
  MemoryStore m;
  for (std::size_t i = 0; i < senses.size(); ++i) {
    if (!m.index_.emplace(senses[i], i).second) throw FormatError("memory snapshot repeats sense " + senses[i]);
  }
  m.senses_ = std::move(senses);
  m.slots_ = std::move(slots);
  m.occupied_ = std::move(occupied);
  for (std::size_t r = 0; r < m.size(); ++r) {
    const Tensor row = m.slots_.row(r);
    if (!row.all_finite() || l2_norm(row.span()) > 1.0 + 1e-12) {
      throw FormatError("memory snapshot: slot for " + m.senses_[r] + " is not finite with norm <= 1");
    }
  }
  return m;
}

std::size_t MemoryStore::slot_of(const std::string& sense_id) const {
  auto it = index_.find(sense_id);
  if (it == index_.end()) throw AddressingError("no memory slot for sense '" + sense_id + "'");
  return it->second;
}

std::vector<std::size_t> MemoryStore::occupied_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < occupied_.size(); ++r) {
    if (occupied_[r]) rows.push_back(r);
  }
  return rows;
}

std::size_t MemoryStore::num_occupied() const {
  return static_cast<std::size_t>(std::count(occupied_.begin(), occupied_.end(), true));
}

void MemoryStore::set_row(std::size_t r, const Tensor& value) {
  if (r >= size()) throw AddressingError("memory row " + std::to_string(r) + " out of range");
  if (value.size() != dim()) throw DimensionError("memory row has dim " + std::to_string(value.size()));
  for (std::size_t j = 0; j < dim(); ++j) slots_.at(r, j) = value[j];
  occupied_[r] = true;
}

// ---- networks ----------------------------------------------------------------

MemoryNets init_memory_nets(std::size_t dim, std::uint64_t seed) {
  MemoryNets n;
  n.dim = dim;
  n.m_post = GaussianNet::create(n.store, seed, "m.post", dim, 0, dim, dim);
  n.m_prior = GaussianNet::create(n.store, seed, "m.prior", dim, 0, dim, dim);
  // Graph attention starts as plain attention over the raw features.
  n.store.add("ga.W", Tensor::identity(dim));
  n.store.add("ga.Wv", Tensor::identity(dim));
  n.store.add("ga.a", glorot_uniform(seed, "ga.a", 1, 2 * dim, 0.1).reshaped(Shape{2 * dim}));
  Dense::create(n.store, seed, "beta.l1", dim, dim, Activation::relu);
  Dense::create(n.store, seed, "beta.l2", dim, dim, Activation::relu);
  Dense::create(n.store, seed, "beta.out", dim, 1, Activation::sigmoid);
  return n;
}

VsmNets init_vsm_nets(std::size_t dim, std::uint64_t seed) {
  return VsmNets{init_inference_nets(dim, dim, seed), init_memory_nets(dim, seed)};
}

std::vector<Param*> VsmNets::params() {
  std::vector<Param*> out = z.store.all();
  for (Param* p : memory.store.all()) out.push_back(p);
  return out;
}

// ---- recall ------------------------------------------------------------------

Var recall_log_attention(Var slot_rows, Var pooled) {
  Var P = pooled.shape().size() == 1 ? reshape(pooled, Shape{1, pooled.size()}) : pooled;
  if (slot_rows.shape().size() != 2 || slot_rows.shape()[1] != P.shape()[1]) {
    throw DimensionError("recall: slots " + shape_str(slot_rows.shape()) + " vs pooled " + shape_str(pooled.shape()));
  }
  return log_softmax_rows(matmul(P, transpose(slot_rows)));
}

std::optional<Tensor> recall_attention(const MemoryStore& memory, const Tensor& pooled) {
  if (pooled.size() != memory.dim()) {
    throw DimensionError("recall_attention: pooled dim " + std::to_string(pooled.size()) + ", memory dim " +
                         std::to_string(memory.dim()));
  }
  if (memory.num_occupied() == 0) return std::nullopt;
  Graph g;
  std::vector<bool> mask = memory.occupied();
  Var logits = matvec(g.constant(memory.slots()), g.constant(pooled));
  return softmax(logits, mask).value();
}

MemoryPosterior memory_posterior(Graph& g, MemoryNets& nets, Var slot_rows, Var log_gamma, std::size_t L_m,
                                 const NoiseKey& key) {
  if (L_m < 1) throw ArgumentError("memory_posterior: L_m must be >= 1");
  MemoryPosterior out;
  out.components = nets.m_post(g, nets.store, slot_rows);
  out.log_gamma = log_gamma;
  const Tensor& lg = log_gamma.value();
  const std::size_t K = lg.rows(), n = lg.cols(), d = nets.dim;
  if (n != slot_rows.shape()[0]) throw DimensionError("memory_posterior: gamma width differs from slot count");
  for (std::size_t l = 0; l < L_m; ++l) {
    std::vector<std::size_t> chosen(K);
    Tensor eps(Shape{K, d});
    for (std::size_t c = 0; c < K; ++c) {
      const double u = key.with(NoiseStream::memory_component).with({c, l}).uniform(0);
      double acc = 0.0;
      std::size_t a = n - 1;
      for (std::size_t j = 0; j < n; ++j) {
        acc += std::exp(lg.at(c, j));
        if (u < acc) {
          a = j;
          break;
        }
      }
      // Guard against rounding in the cumulative sum landing on a zero-weight
      // trailing component.
      while (a > 0 && std::exp(lg.at(c, a)) == 0.0) --a;
      chosen[c] = a;
      const NoiseKey ek = key.with(NoiseStream::memory_m).with({c, l});
      for (std::size_t j = 0; j < d; ++j) eps.at(c, j) = ek.normal(j);
    }
    Var mu = gather_rows(out.components.mean, chosen);
    Var lv = gather_rows(out.components.log_var, chosen);
    out.samples.push_back(sample_gaussian(mu, lv, eps));
    out.chosen.push_back(std::move(chosen));
  }
  return out;
}

GaussianVar memory_prior(Graph& g, MemoryNets& nets, Var pooled) { return nets.m_prior(g, nets.store, pooled); }

std::vector<Var> meta_test_memory_path(Graph& g, MemoryNets& nets, Var pooled, std::size_t L_m, const NoiseKey& key) {
  if (L_m < 1) throw ArgumentError("meta_test_memory_path: L_m must be >= 1");
  Var P = pooled.shape().size() == 1 ? reshape(pooled, Shape{1, pooled.size()}) : pooled;
  const GaussianVar prior = memory_prior(g, nets, P);
  const std::size_t K = P.shape()[0], d = nets.dim;
  std::vector<Var> samples;
  for (std::size_t l = 0; l < L_m; ++l) {
    Tensor eps(Shape{K, d});
    for (std::size_t c = 0; c < K; ++c) {
      const NoiseKey ek = key.with(NoiseStream::memory_m).with({c, l});
      for (std::size_t j = 0; j < d; ++j) eps.at(c, j) = ek.normal(j);
    }
    samples.push_back(sample_gaussian(prior, eps));
  }
  return samples;
}

Var mixture_log_density_rows(Var samples, const GaussianVar& components, Var log_gamma) {
  Graph& g = *samples.graph();
  const Tensor& X = samples.value();
  const Tensor& mu = components.mean.value();
  const Tensor& lv = components.log_var.value();
  const Tensor& lg = log_gamma.value();
  if (X.rank() != 2 || mu.rank() != 2 || mu.shape() != lv.shape() || mu.cols() != X.cols() ||
      lg.size() != mu.rows()) {
    throw DimensionError("mixture_log_density_rows: samples " + shape_str(X.shape()) + ", components " +
                         shape_str(mu.shape()) + ", log_gamma " + shape_str(lg.shape()));
  }
  const std::size_t L = X.rows(), n = mu.rows(), d = mu.cols();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  auto inv = std::make_shared<std::vector<double>>(n * d);
  std::vector<double> base(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      (*inv)[a * d + j] = std::exp(-lv.at(a, j));
      s += log2pi + lv.at(a, j);
    }
    base[a] = lg[a] - 0.5 * s;
  }
  // resp[l, a] = posterior responsibility of component a for sample l.
  auto resp = std::make_shared<std::vector<double>>(L * n);
  Tensor out(Shape{L});
  std::vector<double> logits(n);
  for (std::size_t l = 0; l < L; ++l) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = X.at(l, j) - mu.at(a, j);
        q += diff * diff * (*inv)[a * d + j];
      }
      logits[a] = base[a] - 0.5 * q;
      mx = std::max(mx, logits[a]);
    }
    if (!std::isfinite(mx)) throw EvaluationError("mixture_log_density_rows: no component has mass");
    double z = 0.0;
    for (std::size_t a = 0; a < n; ++a) z += std::exp(logits[a] - mx);
    out[l] = mx + std::log(z);
    for (std::size_t a = 0; a < n; ++a) (*resp)[l * n + a] = std::exp(logits[a] - out[l]);
  }
  const std::size_t ix = samples.id(), im = components.mean.id(), il = components.log_var.id(), ig = log_gamma.id();
  return g.make(std::move(out), {ix, im, il, ig}, [ix, im, il, ig, L, n, d, inv, resp](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& X = g.value(ix);
    const Tensor& mu = g.value(im);
    Tensor* gx = g.requires_grad(ix) ? &g.accum(ix) : nullptr;
    Tensor* gm = g.requires_grad(im) ? &g.accum(im) : nullptr;
    Tensor* gl = g.requires_grad(il) ? &g.accum(il) : nullptr;
    Tensor* gg = g.requires_grad(ig) ? &g.accum(ig) : nullptr;
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t a = 0; a < n; ++a) {
        const double w = up[l] * (*resp)[l * n + a];
        if (w == 0.0) continue;
        if (gg) (*gg)[a] += w;
        for (std::size_t j = 0; j < d; ++j) {
          const double iv = (*inv)[a * d + j];
          const double diff = X.at(l, j) - mu.at(a, j);
          if (gx) gx->at(l, j) -= w * diff * iv;
          if (gm) gm->at(a, j) += w * diff * iv;
          if (gl) gl->at(a, j) += w * 0.5 * (diff * diff * iv - 1.0);
        }
      }
    }
  });
}

Var mixture_log_density(Var m, const GaussianVar& components, Var log_gamma) {
  return reshape(mixture_log_density_rows(reshape(m, Shape{1, m.size()}), components, log_gamma), Shape{});
}

Var memory_kl_estimate(const MemoryPosterior& post, const GaussianVar& prior) {
  Graph& g = *post.log_gamma.graph();
  const std::size_t K = post.log_gamma.shape()[0];
  const std::size_t L = post.samples.size();
  const std::size_t d = prior.mean.shape().back();
  Var zero = g.constant(Tensor(Shape{1}));
  std::vector<Var> per_class;
  for (std::size_t c = 0; c < K; ++c) {
    std::vector<Var> rows;
    for (std::size_t l = 0; l < L; ++l) rows.push_back(row(post.samples[l], c));
    Var M = stack_rows(rows);  // L x d
    Var mix = mixture_log_density_rows(M, post.components, row(post.log_gamma, c));
    const GaussianVar single{reshape(row(prior.mean, c), Shape{1, d}), reshape(row(prior.log_var, c), Shape{1, d})};
    Var pri = mixture_log_density_rows(M, single, zero);
    per_class.push_back(reshape(scale(sum(sub(mix, pri)), 1.0 / static_cast<double>(L)), Shape{1}));
  }
  return concat(per_class);
}

std::vector<GaussianVar> posterior_z_given_memory(Graph& g, InferenceNets& nets, Var pooled,
                                                  const std::vector<Var>& samples) {
  if (samples.empty()) throw ArgumentError("posterior_z_given_memory: no memory samples");
  std::vector<GaussianVar> out;
  for (Var m : samples) out.push_back(infer_posterior_z(g, nets, pooled, m));
  return out;
}

// ---- update ------------------------------------------------------------------

UpdateCandidate graph_attention_aggregate(Graph& g, MemoryNets& nets, Var anchor, const std::vector<Var>& features) {
  const std::size_t d = nets.dim;
  std::vector<Var> nodes = {anchor};
  nodes.insert(nodes.end(), features.begin(), features.end());
  for (Var v : nodes) {
    if (v.shape() != Shape{d}) throw DimensionError("graph attention node has shape " + shape_str(v.shape()));
  }
  Var F = stack_rows(nodes);                                      // (N+1) x d
  Var WF = matmul(F, transpose(g.param(nets.store.at("ga.W"))));  // (N+1) x d
  Var a = g.param(nets.store.at("ga.a"));
  Var a_src = slice(a, 0, d), a_dst = slice(a, d, d);
  // s_i = leaky(a . [W f_0 || W f_i])
  Var scores = leaky_relu(add(dot(a_src, row(WF, 0)), matvec(WF, a_dst)), MemoryNets::kLeakySlope);
  Var alpha = softmax(scores);
  Var values = matmul(F, transpose(g.param(nets.store.at("ga.Wv"))));  // (N+1) x d
  return {matvec(transpose(values), alpha), alpha};
}

void BetaConfig::validate() const {
  if (mode == BetaMode::fixed && !(value > 0.0 && value < 1.0)) throw ConfigError("fixed beta must lie in (0, 1)");
}

Var adaptive_beta(Graph& g, MemoryNets& nets, Var mbar, const BetaConfig& cfg) {
  if (cfg.mode == BetaMode::fixed) {
    cfg.validate();
    return g.constant(Tensor::scalar(cfg.value));
  }
  Var h = Dense::bind(nets.store, "beta.l1", Activation::relu)(g, mbar);
  h = Dense::bind(nets.store, "beta.l2", Activation::relu)(g, h);
  Var logit = Dense::bind(nets.store, "beta.out", Activation::identity)(g, h);
  logit = clamp(logit, -MemoryNets::kBetaLogitBound, MemoryNets::kBetaLogitBound);
  return reshape(activation(Activation::sigmoid, logit), Shape{});
}

Var prospective_slot(Var current, bool occupied, Var mbar, Var beta) {
  if (!occupied) return norm_clip(mbar);
  return norm_clip(add(mul(beta, current), mul(affine(beta, -1.0, 1.0), mbar)));
}

void update_memory(MemoryStore& memory, const std::string& sense_id, const Tensor& mbar, double beta) {
  const std::size_t r = memory.slot_of(sense_id);
  if (mbar.size() != memory.dim()) throw DimensionError("update_memory: M_bar dim " + std::to_string(mbar.size()));
  if (!mbar.all_finite()) throw EvaluationError("update_memory: M_bar for " + sense_id + " is not finite");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("update_memory: beta outside [0, 1]");
  Graph g;
  Var next = prospective_slot(g.constant(memory.row(r)), memory.occupied()[r], g.constant(mbar),
                              g.constant(Tensor::scalar(beta)));
  memory.set_row(r, next.value());
}

// ---- objective ---------------------------------------------------------------

void VsmHyper::validate() const {
  if (!(lambda_z >= 0.0) || !(lambda_m >= 0.0)) throw ConfigError("lambda_z and lambda_m must be >= 0");
  if (L_z < 1 || L_m < 1) throw ConfigError("L_z and L_m must be >= 1");
}

Var vsm_objective(const std::vector<GaussianVar>& z_posteriors, Var queries, const std::vector<std::size_t>& labels,
                  const std::optional<GaussianVar>& z_priors, const std::optional<Var>& memory_kl,
                  const VsmHyper& hyper, const NoiseBank& eps) {
  if (z_posteriors.empty()) throw ArgumentError("vsm_objective: no memory samples");
  if (labels.empty()) throw ArgumentError("vsm_objective: empty query set");
  const double inv_lm = 1.0 / static_cast<double>(z_posteriors.size());
  std::vector<Var> nll, kl;
  for (const auto& post : z_posteriors) {
    nll.push_back(sum(sampled_prototype_nll(post, queries, labels, eps)));
    if (hyper.lambda_z != 0.0) {
      if (!z_priors) throw ArgumentError("vsm_objective: priors required when lambda_z > 0");
      kl.push_back(sum(kl_diag_gauss_pairwise(post, *z_priors)));
    }
  }
  Var loss = scale(add_n(nll), inv_lm);
  if (!kl.empty()) loss = add(loss, scale(add_n(kl), hyper.lambda_z * inv_lm));
  if (hyper.lambda_m != 0.0 && memory_kl) {
    loss = add(loss, scale(sum(*memory_kl), hyper.lambda_m * static_cast<double>(labels.size())));
  }
  return loss;
}

VsmForward vsm_forward(Graph& g, EncoderParams& enc, VsmNets& nets, const MemoryStore& memory, const Episode& ep,
                       const VsmHyper& hyper, const BetaConfig& beta, const NoiseKey& key) {
  hyper.validate();
  const std::size_t K = ep.num_support_classes;
  const EpisodeReps reps = encode_episode(g, enc, ep);
  const std::vector<Var> pooled_rows = compute_prototypes(reps.groups);
  Var pooled = stack_rows(pooled_rows);
  Var queries = stack_rows(reps.query);
  const auto labels = query_labels(ep);

  VsmForward out;
  out.class_features.resize(ep.num_classes());
  for (std::size_t i = 0; i < ep.support.size(); ++i) {
    out.class_features[ep.support[i].class_index].push_back(reps.support[i].value());
  }
  for (std::size_t i = 0; i < ep.query.size(); ++i) {
    out.class_features[ep.query[i].class_index].push_back(reps.query[i].value());
  }

  // Slot rows visible to recall.
  Var slots = g.constant(memory.slots());
  std::vector<bool> visible = memory.occupied();
  if (hyper.lookahead) {
    std::vector<std::size_t> rows;
    std::vector<Var> repl;
    for (std::size_t c = 0; c < K; ++c) {
      const std::size_t r = memory.slot_of(ep.classes[c]);
      const bool occ = memory.occupied()[r];
      Var current = g.constant(memory.row(r));
      Var anchor = occ ? current : pooled_rows[c];
      const UpdateCandidate cand = graph_attention_aggregate(g, nets.memory, anchor, reps.groups[c]);
      Var b = adaptive_beta(g, nets.memory, cand.mbar, beta);
      rows.push_back(r);
      repl.push_back(prospective_slot(current, occ, cand.mbar, b));
      visible[r] = true;
    }
    slots = scatter_rows(slots, rows, repl);
  }
  std::vector<std::size_t> visible_rows;
  for (std::size_t r = 0; r < visible.size(); ++r) {
    if (visible[r]) visible_rows.push_back(r);
  }

  std::vector<Var> samples;
  std::optional<Var> memory_kl;
  if (visible_rows.empty()) {
    samples = meta_test_memory_path(g, nets.memory, pooled, hyper.L_m, key);
  } else {
    out.recalled = true;
    Var slot_rows = gather_rows(slots, visible_rows);
    Var log_gamma = recall_log_attention(slot_rows, pooled);
    const MemoryPosterior post = memory_posterior(g, nets.memory, slot_rows, log_gamma, hyper.L_m, key);
    samples = post.samples;
    if (hyper.lambda_m != 0.0) memory_kl = memory_kl_estimate(post, memory_prior(g, nets.memory, pooled));
  }

  const std::vector<GaussianVar> z_post = posterior_z_given_memory(g, nets.z, pooled, samples);
  std::optional<GaussianVar> z_prior;
  if (hyper.lambda_z != 0.0) z_prior = infer_prior_z(g, nets.z, queries);
  const NoiseBank eps = draw_prototype_noise(key, hyper.L_z, K, nets.z.z_dim);
  out.loss = vsm_objective(z_post, queries, labels, z_prior, memory_kl, hyper, eps);
  return out;
}

Var vsm_loss(Graph& g, EncoderParams& enc, VsmNets& nets, const MemoryStore& memory, const Episode& ep,
             const VsmHyper& hyper, const BetaConfig& beta, const NoiseKey& key) {
  return vsm_forward(g, enc, nets, memory, ep, hyper, beta, key).loss;
}

std::vector<double> commit_episode(MemoryStore& memory, VsmNets& nets, const Episode& ep,
                                   const std::vector<std::vector<Tensor>>& class_features, const BetaConfig& beta) {
  if (class_features.size() != ep.num_classes()) throw ArgumentError("commit_episode: one feature group per class");
  std::vector<double> betas;
  for (std::size_t c = 0; c < ep.num_classes(); ++c) {
    if (class_features[c].empty()) continue;
    Graph g;
    std::vector<Var> feats;
    for (const auto& f : class_features[c]) feats.push_back(g.constant(f));
    const std::size_t r = memory.slot_of(ep.classes[c]);
    const bool occ = memory.occupied()[r];
    Var anchor = occ ? g.constant(memory.row(r)) : mean_support_representation(feats);
    const UpdateCandidate cand = graph_attention_aggregate(g, nets.memory, anchor, feats);
    const double b = adaptive_beta(g, nets.memory, cand.mbar, beta).item();
    update_memory(memory, ep.classes[c], cand.mbar.value(), b);
    betas.push_back(b);
  }
  return betas;
}

std::vector<Tensor> predict_vsm(EncoderParams& enc, VsmNets& nets, const Episode& ep, std::size_t L_z,
                                std::size_t L_m, const NoiseKey& key) {
  Graph g;
  const EpisodeReps reps = encode_episode(g, enc, ep);
  Var pooled = stack_rows(compute_prototypes(reps.groups));
  const std::vector<Var> samples = meta_test_memory_path(g, nets.memory, pooled, L_m, key);
  const std::vector<GaussianVar> z_post = posterior_z_given_memory(g, nets.z, pooled, samples);
  const NoiseBank eps = draw_prototype_noise(key, L_z, ep.num_support_classes, nets.z.z_dim);
  std::vector<Tensor> queries;
  for (Var q : reps.query) queries.push_back(q.value());
  std::vector<Tensor> out(queries.size(), Tensor(Shape{ep.num_support_classes}));
  for (const auto& post : z_post) {
    const auto probs = sampled_prototype_probs(post.value(), queries, eps);
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t k = 0; k < out[i].size(); ++k) out[i][k] += probs[i][k] / static_cast<double>(z_post.size());
  }
  return out;
}

}  // namespace vsm
