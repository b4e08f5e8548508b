// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/protonet.hpp"

#include <cmath>
#include <limits>

#include "vsm/errors.hpp"

namespace vsm {

Distance parse_distance(const std::string& name) {
  if (name == "sq_euclidean") return Distance::sq_euclidean;
  if (name == "cosine") return Distance::cosine;
  throw ConfigError("unknown distance '" + name + "'");
}

std::string to_string(Distance d) { return d == Distance::sq_euclidean ? "sq_euclidean" : "cosine"; }

PrototypeSet compute_prototypes(const std::vector<std::vector<Tensor>>& groups) {
  PrototypeSet out;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) throw ArgumentError("class " + std::to_string(c) + " has no support examples");
    out.push_back(mean_support_representation(groups[c]));
  }
  return out;
}

std::vector<Var> compute_prototypes(const std::vector<std::vector<Var>>& groups) {
  std::vector<Var> out;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) throw ArgumentError("class " + std::to_string(c) + " has no support examples");
    out.push_back(mean_support_representation(groups[c]));
  }
  return out;
}

Var class_log_probs(Var x, Var protos, Distance d) {
  if (protos.shape().size() != 2 || x.shape().size() != 1 || protos.shape()[1] != x.size()) {
    throw ArgumentError("class_log_probs: query " + shape_str(x.shape()) + " vs prototypes " +
                        shape_str(protos.shape()));
  }
  Var dist;
  if (d == Distance::sq_euclidean) {
    dist = row_sq_distances(protos, x);
  } else {
    std::vector<Var> parts;
    for (std::size_t k = 0; k < protos.shape()[0]; ++k) parts.push_back(reshape(cosine_distance(row(protos, k), x), Shape{1}));
    dist = concat(parts);
  }
  return log_softmax(scale(dist, -1.0));
}

Tensor classify(const Tensor& x, const PrototypeSet& protos, Distance d) {
  if (protos.empty()) throw ArgumentError("classify: no prototypes");
  for (const auto& z : protos) {
    if (z.shape() != x.shape()) {
      throw ArgumentError("classify: query " + shape_str(x.shape()) + " vs prototype " + shape_str(z.shape()));
    }
  }
  Graph g;
  std::vector<Var> rows;
  for (const auto& z : protos) rows.push_back(g.constant(z));
  return exp(class_log_probs(g.constant(x), stack_rows(rows), d)).value();
}

std::size_t majority_sense(const std::vector<std::size_t>& labels) {
  if (labels.empty()) throw ArgumentError("majority_sense: empty support");
  std::size_t max_label = 0;
  for (std::size_t l : labels) max_label = std::max(max_label, l);
  std::vector<std::size_t> counts(max_label + 1, 0);
  for (std::size_t l : labels) ++counts[l];
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return best;
}

std::size_t nearest_neighbor(const Tensor& query, const std::vector<Tensor>& support,
                             const std::vector<std::size_t>& labels) {
  if (support.empty()) throw ArgumentError("nearest_neighbor: empty support");
  if (support.size() != labels.size()) throw ArgumentError("nearest_neighbor: labels do not match support");
  const double qn = l2_norm(query.span());
  if (qn == 0.0) throw ArgumentError("nearest_neighbor: zero query vector under cosine distance");
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i].shape() != query.shape()) throw ArgumentError("nearest_neighbor: dimension mismatch");
    const double sn = l2_norm(support[i].span());
    if (sn == 0.0) throw ArgumentError("nearest_neighbor: zero support vector " + std::to_string(i));
    double dotp = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) dotp += query[k] * support[i][k];
    const double dist = 1.0 - dotp / (qn * sn);
    if (dist < best) {
      best = dist;
      best_i = i;
    }
  }
  return labels[best_i];
}

EpisodeReps encode_episode(Graph& g, EncoderParams& enc, const Episode& ep) {
  EpisodeReps out;
  out.groups.resize(ep.num_support_classes);
  for (const auto& lr : ep.support) {
    Var r = encode(g, enc, *lr.record);
    out.support.push_back(r);
    if (lr.class_index >= ep.num_support_classes) {
      throw ArgumentError("support sentence " + lr.record->sentence_id + " has a query-only class");
    }
    out.groups[lr.class_index].push_back(r);
  }
  for (const auto& lr : ep.query) out.query.push_back(encode(g, enc, *lr.record));
  return out;
}

Var protonet_loss(Graph& g, EncoderParams& enc, const Episode& ep, Distance d) {
  if (ep.query.empty()) throw ArgumentError("protonet_loss: empty query set");
  const EpisodeReps reps = encode_episode(g, enc, ep);
  Var protos = stack_rows(compute_prototypes(reps.groups));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < ep.query.size(); ++i) {
    const std::size_t y = ep.query[i].class_index;
    if (y >= ep.num_support_classes) throw ArgumentError("protonet_loss: query class without support");
    terms.push_back(pick(class_log_probs(reps.query[i], protos, d), y));
  }
  return scale(add_n(terms), -1.0 / static_cast<double>(terms.size()));
}

std::vector<Tensor> predict_protonet(EncoderParams& enc, const Episode& ep, Distance d) {
  Graph g;
  const EpisodeReps reps = encode_episode(g, enc, ep);
  Var protos = stack_rows(compute_prototypes(reps.groups));
  std::vector<Tensor> out;
  for (Var q : reps.query) out.push_back(exp(class_log_probs(q, protos, d)).value());
  return out;
}

std::size_t argmax(const Tensor& probs) {
  if (probs.size() == 0) throw ArgumentError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

std::vector<Tensor> predict_ef_protonet(const EncoderParams& init, const Episode& ep, std::size_t support_steps,
                                        double learning_rate, Distance d) {
  EncoderParams enc = init;
  if (support_steps > 0) {
    // The support plays both roles during adaptation.
    Episode adapt = ep;
    adapt.query = ep.support;
    for (std::size_t s = 0; s < support_steps; ++s) {
      Graph g;
      enc.store.zero_grad();
      Var loss = protonet_loss(g, enc, adapt, d);
      g.backward(loss);
      for (Param* p : enc.store.all()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= learning_rate * p->grad[i];
      }
    }
  }
  return predict_protonet(enc, ep, d);
}

}  // namespace vsm
