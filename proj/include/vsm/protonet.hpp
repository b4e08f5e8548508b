// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Prototype classification and the non-variational baselines.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vsm/autodiff.hpp"
#include "vsm/encoders.hpp"
#include "vsm/episodes.hpp"

namespace vsm {

enum class Distance { sq_euclidean, cosine };

Distance parse_distance(const std::string& name);
std::string to_string(Distance d);

// One prototype per class, in class-index order.
using PrototypeSet = std::vector<Tensor>;

PrototypeSet compute_prototypes(const std::vector<std::vector<Tensor>>& groups);
std::vector<Var> compute_prototypes(const std::vector<std::vector<Var>>& groups);

// softmax(-d(x, z_k)) over classes.
Tensor classify(const Tensor& x, const PrototypeSet& protos, Distance d);
// Log class probabilities for one query against a K x d prototype matrix.
Var class_log_probs(Var x, Var protos, Distance d);

std::size_t majority_sense(const std::vector<std::size_t>& support_labels);
std::size_t nearest_neighbor(const Tensor& query, const std::vector<Tensor>& support,
                             const std::vector<std::size_t>& labels);

// Encoded episode: representations plus support grouped by class.
struct EpisodeReps {
  std::vector<Var> support;
  std::vector<Var> query;
  std::vector<std::vector<Var>> groups;  // [num_support_classes]
};

EpisodeReps encode_episode(Graph& g, EncoderParams& enc, const Episode& ep);

// Mean query cross-entropy of the prototype classifier.
Var protonet_loss(Graph& g, EncoderParams& enc, const Episode& ep, Distance d = Distance::sq_euclidean);
// Per-query class distributions over the episode's support classes.
std::vector<Tensor> predict_protonet(EncoderParams& enc, const Episode& ep, Distance d = Distance::sq_euclidean);

std::size_t argmax(const Tensor& probs);

// Episodic fine-tuning baseline: an untrained encoder, optionally adapted on
// the support set with plain gradient steps before prototype prediction.
// The passed encoder is not modified.
std::vector<Tensor> predict_ef_protonet(const EncoderParams& init, const Episode& ep, std::size_t support_steps,
                                        double learning_rate, Distance d = Distance::sq_euclidean);

}  // namespace vsm
