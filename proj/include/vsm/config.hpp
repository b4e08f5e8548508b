// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Run configuration, named hyperparameter profiles, and data sources.
//
// A RunConfig round-trips through JSON. Keys missing from a document keep
// their defaults; when "profile" is set its values are applied first and
// explicit keys override them.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsm/corpus.hpp"
#include "vsm/encoders.hpp"
#include "vsm/protonet.hpp"

namespace vsm {

enum class ModelKind { majority, nearest_neighbor, ef_protonet, protonet, vpn, vsm, beta_vsm };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind k);
// Ablation ladder position: baselines first, then protonet < vpn < vsm < beta_vsm.
int ladder_rank(ModelKind k);
bool is_trainable(ModelKind k);
bool is_variational(ModelKind k);
bool uses_memory(ModelKind k);

struct CorpusFiles {
  std::filesystem::path meta;
  std::filesystem::path blob;
};

// Exactly one source: a synthetic spec, one corpus to split by word, or
// three pre-split corpora.
struct DataConfig {
  std::optional<SynthSpec> synth;
  std::optional<CorpusFiles> corpus;
  std::optional<CorpusFiles> meta_train;
  std::optional<CorpusFiles> meta_validation;
  std::optional<CorpusFiles> meta_test;
  SplitFractions fractions;
  std::uint64_t split_seed = 1;
  // Seeds the construction of meta-validation and meta-test episodes, which
  // are shared by every run seed.
  std::uint64_t episode_seed = 1;

  void validate() const;
};

CorpusSplits load_data(const DataConfig& data);

struct RunConfig {
  ModelKind model = ModelKind::protonet;
  std::string profile;  // empty, or a hyper_profile_names() entry

  EncoderArch arch = EncoderArch::mlp;
  std::size_t dim = 64;
  Distance distance = Distance::sq_euclidean;

  std::size_t support_size = 8;
  std::size_t words_per_episode = 2;
  std::size_t senses_per_word = 0;
  std::size_t min_shots = 2;

  // lambda_z is the single KL weight for vpn.
  double lambda_z = 1e-3;
  double lambda_m = 1e-3;
  std::size_t L_z = 150;
  std::size_t L_m = 150;
  double beta = 0.5;  // vsm only
  bool lookahead = true;
  // beta_vsm only: keep f_beta out of the optimizer.
  bool freeze_beta_net = false;

  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t episodes = 10000;
  std::size_t validation_every = 500;

  // ef_protonet: gradient steps on each meta-test support set.
  std::size_t ef_steps = 0;
  double ef_learning_rate = 1e-2;

  std::size_t threads = 0;  // 0 picks the hardware concurrency
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path diagnostics_dir;

  DataConfig data;

  void validate() const;
};

struct HyperProfile {
  std::string name;
  EncoderArch arch;
  std::size_t dim;
  double learning_rate;
  double lambda_z;
  double lambda_m;
  std::size_t L_z;
  std::size_t L_m;
  std::size_t batch_size;
};

const std::vector<std::string>& hyper_profile_names();
// Throws ConfigError for an unknown name or |S| outside {4, 8, 16, 32}.
HyperProfile hyper_profile(const std::string& name, std::size_t support_size);
void apply_profile(RunConfig& cfg, const HyperProfile& profile);

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

// Sets a dotted key ("lambda_z", "data.synth.separation") in a config
// document. The value is parsed as JSON when possible, else taken as a string.
void set_config_value(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);

}  // namespace vsm
