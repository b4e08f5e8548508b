// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/vpn.hpp"

#include <cmath>
#include <memory>

#include "vsm/errors.hpp"
#include "vsm/protonet.hpp"

namespace vsm {
namespace {

Var first_layer(Graph& g, ParamStore& store, const std::string& name, Var x, bool rows) {
  Var W = g.param(store.at(name));
  return rows ? matmul(x, transpose(W)) : matvec(W, x);
}

// Sample l as a K x d matrix.
void sample_rows(const Tensor& mean, const Tensor& log_var, const Tensor& eps, Tensor& z, Tensor& sd) {
  for (std::size_t i = 0; i < mean.size(); ++i) {
    sd[i] = std::exp(0.5 * log_var[i]);
    z[i] = mean[i] + sd[i] * eps[i];
  }
}

// Softmax of -||x - z_k||^2 over rows of z, written into p.
void prototype_softmax(const Tensor& z, const double* x, std::size_t K, std::size_t d, std::vector<double>& p) {
  double mx = -INFINITY;
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - z.at(k, j);
      s += diff * diff;
    }
    p[k] = -s;
    mx = std::max(mx, p[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    p[k] = std::exp(p[k] - mx);
    total += p[k];
  }
  for (std::size_t k = 0; k < K; ++k) p[k] /= total;
}

}  // namespace

GaussianNet GaussianNet::create(ParamStore& store, std::uint64_t seed, const std::string& name, std::size_t in_dim,
                                std::size_t side_dim, std::size_t hidden, std::size_t out_dim) {
  if (in_dim == 0 || hidden == 0 || out_dim == 0) throw ConfigError(name + ": dims must be positive");
  GaussianNet n{name, in_dim, side_dim, hidden, out_dim};
  store.add(name + ".l1.W", glorot_uniform(seed, name + ".l1.W", hidden, in_dim + side_dim));
  if (side_dim > 0) {
    // The side block is the trailing columns of one Glorot draw over the
    // concatenated input.
    Tensor full = store.at(name + ".l1.W").value;
    Tensor main(Shape{hidden, in_dim}), side(Shape{hidden, side_dim});
    for (std::size_t r = 0; r < hidden; ++r) {
      for (std::size_t c = 0; c < in_dim; ++c) main.at(r, c) = full.at(r, c);
      for (std::size_t c = 0; c < side_dim; ++c) side.at(r, c) = full.at(r, in_dim + c);
    }
    store.at(name + ".l1.W").value = main;
    store.at(name + ".l1.W").grad = Tensor(main.shape());
    store.add(name + ".l1.Wside", side);
  }
  store.add(name + ".l1.b", Tensor(Shape{hidden}));
  Dense::create(store, seed, name + ".l2", hidden, hidden, Activation::elu);
  Dense::create(store, seed, name + ".mean", hidden, out_dim, Activation::identity);
  Dense::create(store, seed, name + ".logvar", hidden, out_dim, Activation::identity);
  return n;
}

GaussianVar GaussianNet::operator()(Graph& g, ParamStore& store, Var x, std::optional<Var> side) const {
  const bool rows = x.shape().size() == 2;
  const std::size_t width = rows ? x.shape()[1] : x.size();
  if (width != in_dim) {
    throw DimensionError(name + ": input " + shape_str(x.shape()) + ", expected width " + std::to_string(in_dim));
  }
  if ((side_dim > 0) != side.has_value()) {
    throw ArgumentError(name + (side_dim > 0 ? ": side input required" : ": no side input expected"));
  }
  Var pre = first_layer(g, store, name + ".l1.W", x, rows);
  if (side) {
    const bool srows = side->shape().size() == 2;
    const std::size_t swidth = srows ? side->shape()[1] : side->size();
    if (srows != rows || swidth != side_dim || (rows && side->shape()[0] != x.shape()[0])) {
      throw DimensionError(name + ": side input " + shape_str(side->shape()) + " does not match " +
                           shape_str(x.shape()));
    }
    pre = add(pre, first_layer(g, store, name + ".l1.Wside", *side, rows));
  }
  Var b1 = g.param(store.at(name + ".l1.b"));
  Var h = activation(Activation::elu, rows ? add_row_broadcast(pre, b1) : add(pre, b1));
  h = Dense::bind(store, name + ".l2", Activation::elu).apply(g, h);
  Var mean = Dense::bind(store, name + ".mean", Activation::identity).apply(g, h);
  if (in_dim == out_dim) mean = add(mean, x);
  Var log_var = Dense::bind(store, name + ".logvar", Activation::identity).apply(g, h);
  return {mean, clamp(log_var, kLogVarMin, kLogVarMax)};
}

InferenceNets init_inference_nets(std::size_t feature_dim, std::size_t memory_dim, std::uint64_t seed) {
  InferenceNets n;
  n.feature_dim = feature_dim;
  n.memory_dim = memory_dim;
  n.z_dim = feature_dim;
  n.posterior = GaussianNet::create(n.store, seed, "z.post", feature_dim, memory_dim, feature_dim, feature_dim);
  n.prior = GaussianNet::create(n.store, seed, "z.prior", feature_dim, 0, feature_dim, feature_dim);
  return n;
}

GaussianVar infer_posterior_z(Graph& g, InferenceNets& nets, Var pooled, std::optional<Var> memory) {
  return nets.posterior(g, nets.store, pooled, memory);
}

GaussianVar infer_prior_z(Graph& g, InferenceNets& nets, Var query) { return nets.prior(g, nets.store, query); }

void VpnHyper::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (L_z < 1) throw ConfigError("L_z must be >= 1");
}

NoiseBank draw_prototype_noise(const NoiseKey& key, std::size_t L, std::size_t K, std::size_t d) {
  const NoiseKey base = key.with(NoiseStream::prototype_z);
  NoiseBank bank;
  bank.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    Tensor e(Shape{K, d});
    for (std::size_t c = 0; c < K; ++c) {
      const NoiseKey k = base.with({l, c});
      for (std::size_t j = 0; j < d; ++j) e.at(c, j) = k.normal(j);
    }
    bank.push_back(std::move(e));
  }
  return bank;
}

Var sampled_prototype_nll(const GaussianVar& protos, Var queries, const std::vector<std::size_t>& labels,
                          const NoiseBank& eps) {
  const Tensor& mu = protos.mean.value();
  const Tensor& lv = protos.log_var.value();
  const Tensor& X = queries.value();
  if (mu.shape().size() != 2 || mu.shape() != lv.shape() || X.shape().size() != 2 || X.cols() != mu.cols()) {
    throw DimensionError("sampled_prototype_nll: prototypes " + shape_str(mu.shape()) + ", queries " +
                         shape_str(X.shape()));
  }
  const std::size_t K = mu.rows(), d = mu.cols(), Q = X.rows(), L = eps.size();
  if (labels.size() != Q) throw ArgumentError("sampled_prototype_nll: one label per query required");
  if (L == 0) throw ArgumentError("sampled_prototype_nll: no samples");
  for (std::size_t y : labels) {
    if (y >= K) throw ArgumentError("sampled_prototype_nll: label " + std::to_string(y) + " has no prototype");
  }
  for (const auto& e : eps) {
    if (e.shape() != mu.shape()) throw DimensionError("sampled_prototype_nll: noise shape " + shape_str(e.shape()));
  }

  Tensor out(Shape{Q});
  Tensor z(mu.shape()), sd(mu.shape());
  std::vector<double> p(K);
  for (std::size_t l = 0; l < L; ++l) {
    sample_rows(mu, lv, eps[l], z, sd);
    for (std::size_t i = 0; i < Q; ++i) {
      prototype_softmax(z, &X.values()[i * d], K, d, p);
      out[i] -= std::log(p[labels[i]]) / static_cast<double>(L);
    }
  }
  // A vanishing probability gives log(0); recompute that query in log space.
  for (std::size_t i = 0; i < Q; ++i) {
    if (std::isfinite(out[i])) continue;
    double acc = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      sample_rows(mu, lv, eps[l], z, sd);
      std::vector<double> logit(K);
      double mx = -INFINITY;
      for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += std::pow(X.at(i, j) - z.at(k, j), 2);
        logit[k] = -s;
        mx = std::max(mx, logit[k]);
      }
      double se = 0.0;
      for (double v : logit) se += std::exp(v - mx);
      acc += (mx + std::log(se) - logit[labels[i]]) / static_cast<double>(L);
    }
    out[i] = acc;
  }

  Graph& g = *queries.graph();
  const std::size_t im = protos.mean.id(), il = protos.log_var.id(), ix = queries.id();
  auto bank = std::make_shared<const NoiseBank>(eps);
  return g.make(std::move(out), {im, il, ix}, [=](Graph& g, std::size_t self) {
    const NoiseBank& eps = *bank;
    const Tensor& up = g.upstream(self);
    const Tensor& mu = g.value(im);
    const Tensor& lv = g.value(il);
    const Tensor& X = g.value(ix);
    Tensor* gmu = g.requires_grad(im) ? &g.accum(im) : nullptr;
    Tensor* glv = g.requires_grad(il) ? &g.accum(il) : nullptr;
    Tensor* gx = g.requires_grad(ix) ? &g.accum(ix) : nullptr;
    Tensor z(mu.shape()), sd(mu.shape()), gz(mu.shape());
    std::vector<double> p(K);
    const double invL = 1.0 / static_cast<double>(L);
    for (std::size_t l = 0; l < L; ++l) {
      sample_rows(mu, lv, eps[l], z, sd);
      gz.fill(0.0);
      for (std::size_t i = 0; i < Q; ++i) {
        if (up[i] == 0.0) continue;
        prototype_softmax(z, &X.values()[i * d], K, d, p);
        for (std::size_t k = 0; k < K; ++k) {
          const double gk = (p[k] - (k == labels[i] ? 1.0 : 0.0)) * invL * up[i];
          if (gk == 0.0) continue;
          for (std::size_t j = 0; j < d; ++j) {
            const double diff = X.at(i, j) - z.at(k, j);
            gz.at(k, j) += 2.0 * gk * diff;
            if (gx) gx->at(i, j) -= 2.0 * gk * diff;
          }
        }
      }
      for (std::size_t t = 0; t < gz.size(); ++t) {
        if (gmu) (*gmu)[t] += gz[t];
        if (glv) (*glv)[t] += gz[t] * 0.5 * sd[t] * eps[l][t];
      }
    }
  });
}

std::vector<Tensor> sampled_prototype_probs(const GaussianDiag& protos, const std::vector<Tensor>& queries,
                                            const NoiseBank& eps) {
  const Tensor& mu = protos.mean;
  if (mu.shape().size() != 2 || mu.shape() != protos.log_var.shape()) {
    throw DimensionError("sampled_prototype_probs: prototypes must be K x d");
  }
  if (eps.empty()) throw ArgumentError("sampled_prototype_probs: no samples");
  const std::size_t K = mu.rows(), d = mu.cols();
  std::vector<Tensor> out(queries.size(), Tensor(Shape{K}));
  Tensor z(mu.shape()), sd(mu.shape());
  std::vector<double> p(K);
  for (const auto& e : eps) {
    if (e.shape() != mu.shape()) throw DimensionError("sampled_prototype_probs: noise shape " + shape_str(e.shape()));
    sample_rows(mu, protos.log_var, e, z, sd);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (queries[i].size() != d) throw DimensionError("sampled_prototype_probs: query dim");
      prototype_softmax(z, queries[i].values().data(), K, d, p);
      for (std::size_t k = 0; k < K; ++k) out[i][k] += p[k] / static_cast<double>(eps.size());
    }
  }
  return out;
}

Var vpn_objective(const GaussianVar& posteriors, Var queries, const std::vector<std::size_t>& labels,
                  const std::optional<GaussianVar>& priors, double lambda, const NoiseBank& eps) {
  const std::size_t Q = labels.size();
  if (Q == 0) throw ArgumentError("vpn_objective: empty query set");
  Var per_query = sampled_prototype_nll(posteriors, queries, labels, eps);
  if (lambda != 0.0) {
    if (!priors) throw ArgumentError("vpn_objective: priors required when lambda > 0");
    Var kl = kl_diag_gauss_pairwise(posteriors, *priors);  // Q x K
    return scale(add(sum(per_query), scale(sum(kl), lambda)), 1.0 / static_cast<double>(Q));
  }
  return scale(sum(per_query), 1.0 / static_cast<double>(Q));
}

std::vector<std::size_t> query_labels(const Episode& ep) {
  std::vector<std::size_t> y;
  for (const auto& lr : ep.query) y.push_back(lr.class_index);
  return y;
}

Var vpn_loss(Graph& g, EncoderParams& enc, InferenceNets& nets, const Episode& ep, const VpnHyper& hyper,
             const NoiseKey& key) {
  hyper.validate();
  const EpisodeReps reps = encode_episode(g, enc, ep);
  Var pooled = stack_rows(compute_prototypes(reps.groups));
  Var queries = stack_rows(reps.query);
  const GaussianVar post = infer_posterior_z(g, nets, pooled);
  std::optional<GaussianVar> prior;
  if (hyper.lambda != 0.0) prior = infer_prior_z(g, nets, queries);
  const NoiseBank eps = draw_prototype_noise(key, hyper.L_z, ep.num_support_classes, nets.z_dim);
  return vpn_objective(post, queries, query_labels(ep), prior, hyper.lambda, eps);
}

std::vector<Tensor> predict_vpn(EncoderParams& enc, InferenceNets& nets, const Episode& ep, const NoiseBank& eps) {
  Graph g;
  const EpisodeReps reps = encode_episode(g, enc, ep);
  Var pooled = stack_rows(compute_prototypes(reps.groups));
  const GaussianDiag post = infer_posterior_z(g, nets, pooled).value();
  std::vector<Tensor> queries;
  for (Var q : reps.query) queries.push_back(q.value());
  return sampled_prototype_probs(post, queries, eps);
}

std::vector<Tensor> predict_vpn(EncoderParams& enc, InferenceNets& nets, const Episode& ep, std::size_t L_z,
                                const NoiseKey& key) {
  return predict_vpn(enc, nets, ep, draw_prototype_noise(key, L_z, ep.num_support_classes, nets.z_dim));
}

}  // namespace vsm
