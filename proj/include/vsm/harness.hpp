// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Meta-training, evaluation, ablation and checkpoints.
//
// Every run is a pure function of (RunConfig, seed): the seed keys parameter
// initialisation, the episode sampler, and all Monte Carlo noise. Tasks in a
// batch run on private copies of the parameters; their gradients are summed
// in task order, so results do not depend on the thread count.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsm/config.hpp"
#include "vsm/episodes.hpp"
#include "vsm/metrics.hpp"
#include "vsm/optim.hpp"
#include "vsm/vpn.hpp"
#include "vsm/vsm.hpp"

namespace vsm {

struct ModelState {
  ModelKind kind = ModelKind::protonet;
  EncoderParams encoder;
  std::optional<InferenceNets> vpn;
  std::optional<VsmNets> vsm;
  MemoryStore memory;  // vsm and beta_vsm only

  // Every parameter, in a fixed order.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  // The parameters the optimizer updates under cfg.
  std::vector<Param*> trainable(const RunConfig& cfg);
};

// Memory slots cover the senses of `inventory` (the meta-train senses).
ModelState init_model(const RunConfig& cfg, std::size_t input_dim, const SenseInventory& inventory,
                      std::uint64_t seed);

// FNV-1a over every parameter value and the memory snapshot.
std::uint64_t state_hash(const ModelState& model);

struct ValidationPoint {
  std::uint64_t episodes = 0;
  double macro_f1 = 0.0;
  friend bool operator==(const ValidationPoint&, const ValidationPoint&) = default;
};

struct Checkpoint {
  RunConfig config;
  std::uint64_t seed = 0;
  std::size_t input_dim = 0;
  ModelState model;
  // Best meta-validation state so far; absent before the first validation.
  std::optional<ModelState> best;
  double best_f1 = 0.0;
  std::uint64_t best_episodes = 0;
  // Optimizer and sampler cursors.
  std::uint64_t adam_steps = 0;
  std::map<std::string, Adam::Moments> adam_state;
  std::uint64_t episodes_done = 0;
  // Summed task loss per batch.
  std::vector<double> loss_trace;
  std::vector<ValidationPoint> validation;

  // The state used for evaluation: best if present, else the latest.
  const ModelState& selected() const { return best ? *best : model; }
};

inline constexpr char kCheckpointMagic[] = "VSMCKPT";
inline constexpr int kCheckpointVersion = 1;

// "VSMCKPT v1 <fnv1a64 of body, 16 hex digits>\n" followed by a JSON body.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);
// Writes to a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint init_checkpoint(const RunConfig& cfg, const CorpusSplits& data, std::uint64_t seed);

struct TrainHooks {
  // Called after every batch with the episodes done so far and the batch loss.
  std::function<void(std::uint64_t, double)> on_batch;
  // Stops training once this many episodes are done (for interrupted runs).
  std::optional<std::uint64_t> stop_after;
};

// Continues ckpt until ckpt.config.episodes meta-train episodes are done.
void continue_training(Checkpoint& ckpt, const CorpusSplits& data, const TrainHooks& hooks = {});
Checkpoint meta_train(const RunConfig& cfg, const CorpusSplits& data, std::uint64_t seed,
                      const TrainHooks& hooks = {});

// Per-query predicted class indices for one episode.
std::vector<std::size_t> predict_episode(ModelState& model, const RunConfig& cfg, const Episode& ep,
                                         std::uint64_t seed);

SeedReport evaluate_seed(const Checkpoint& ckpt, const std::vector<Episode>& episodes);
// One SeedReport per checkpoint; all checkpoints must share model kind and dims.
EvalReport evaluate(const std::vector<Checkpoint>& ckpts, const std::vector<Episode>& episodes);

MetaTestEpisodes meta_test_episodes(const RunConfig& cfg, const Corpus& corpus);

struct AblationRow {
  ModelKind model = ModelKind::protonet;
  std::vector<std::uint64_t> seeds;
  std::vector<double> seed_means;
  double mean = 0.0;
  double std = 0.0;
};

// Trains and evaluates every variant on base.seeds. Rows follow ladder order.
std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<ModelKind>& variants,
                                const CorpusSplits& data);

void write_ablation_table(const std::vector<AblationRow>& rows, const std::filesystem::path& path);
void write_breakdown_table(const std::vector<SenseCountBucket>& buckets, const std::filesystem::path& path);

struct ClassExport {
  std::string sense_id;
  std::vector<double> mu_z;
  std::vector<double> sigma_z;
  std::vector<double> mu_m;     // vsm only
  std::vector<double> sigma_m;  // vsm only
  friend bool operator==(const ClassExport&, const ClassExport&) = default;
};

struct QueryExport {
  std::string sentence_id;
  std::size_t label = 0;
  std::vector<double> representation;
  friend bool operator==(const QueryExport&, const QueryExport&) = default;
};

struct PrototypeExport {
  std::string model;
  std::uint64_t episode_id = 0;
  std::string word_id;
  std::vector<ClassExport> classes;
  std::vector<QueryExport> queries;
  friend bool operator==(const PrototypeExport&, const PrototypeExport&) = default;
};

// Throws UnsupportedError for non-variational models.
PrototypeExport export_prototypes(const Checkpoint& ckpt, const Episode& episode);
void write_prototype_export(const PrototypeExport& e, const std::filesystem::path& path);
PrototypeExport load_prototype_export(const std::filesystem::path& path);

}  // namespace vsm
