// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "vsm/errors.hpp"

namespace vsm {

using json = nlohmann::json;

namespace {

const std::vector<std::pair<ModelKind, std::string>>& model_names() {
  static const std::vector<std::pair<ModelKind, std::string>> names = {
      {ModelKind::majority, "majority"},   {ModelKind::nearest_neighbor, "nearest_neighbor"},
      {ModelKind::ef_protonet, "ef_protonet"}, {ModelKind::protonet, "protonet"},
      {ModelKind::vpn, "vpn"},             {ModelKind::vsm, "vsm"},
      {ModelKind::beta_vsm, "beta_vsm"},
  };
  return names;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json files_to_json(const CorpusFiles& f) { return {{"meta", f.meta.string()}, {"blob", f.blob.string()}}; }

CorpusFiles files_from_json(const json& j, const std::string& where) {
  check_keys(j, {"meta", "blob"}, where);
  if (!j.contains("meta") || !j.contains("blob")) throw ConfigError(where + ": needs meta and blob");
  return {j.at("meta").get<std::string>(), j.at("blob").get<std::string>()};
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '-', '_');
  for (const auto& [k, s] : model_names()) {
    if (s == n) return k;
  }
  throw ConfigError("unknown model '" + name + "'");
}

std::string to_string(ModelKind k) {
  for (const auto& [m, s] : model_names()) {
    if (m == k) return s;
  }
  return "?";
}

int ladder_rank(ModelKind k) { return static_cast<int>(k); }

bool is_trainable(ModelKind k) {
  return k == ModelKind::protonet || k == ModelKind::vpn || k == ModelKind::vsm || k == ModelKind::beta_vsm;
}

bool is_variational(ModelKind k) { return k == ModelKind::vpn || k == ModelKind::vsm || k == ModelKind::beta_vsm; }

bool uses_memory(ModelKind k) { return k == ModelKind::vsm || k == ModelKind::beta_vsm; }

void DataConfig::validate() const {
  const int split_files = meta_train.has_value() + meta_validation.has_value() + meta_test.has_value();
  const int sources = synth.has_value() + corpus.has_value() + (split_files > 0);
  if (sources != 1) throw ConfigError("data: set exactly one of synth, corpus, or the three split files");
  if (split_files != 0 && split_files != 3) throw ConfigError("data: meta_train, meta_validation and meta_test go together");
  if (synth) synth->validate();
  const double total = fractions.train + fractions.validation + fractions.test;
  if (!(fractions.train > 0) || !(fractions.validation >= 0) || !(fractions.test > 0) ||
      std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("data.split: fractions must be positive and sum to 1");
  }
}

CorpusSplits load_data(const DataConfig& data) {
  data.validate();
  if (data.synth) return split_corpus(synth_corpus(*data.synth), data.fractions, data.split_seed);
  if (data.corpus) return split_corpus(load_corpus(data.corpus->meta, data.corpus->blob), data.fractions, data.split_seed);
  CorpusSplits s;
  s.meta_train = load_corpus(data.meta_train->meta, data.meta_train->blob);
  s.meta_validation = load_corpus(data.meta_validation->meta, data.meta_validation->blob);
  s.meta_test = load_corpus(data.meta_test->meta, data.meta_test->blob);
  return s;
}

void RunConfig::validate() const {
  if (support_size != 4 && support_size != 8 && support_size != 16 && support_size != 32) {
    throw ConfigError("support_size must be one of 4, 8, 16, 32");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (arch == EncoderArch::bigru_linear && dim % 2 != 0) throw ConfigError("bigru_linear needs an even dim");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (is_trainable(model)) {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (validation_every < 1) throw ConfigError("validation_every must be >= 1");
  }
  if (is_variational(model)) {
    if (L_z < 1) throw ConfigError("L_z must be >= 1");
    if (!(lambda_z >= 0)) throw ConfigError("lambda_z must be >= 0");
  }
  if (uses_memory(model)) {
    if (L_m < 1) throw ConfigError("L_m must be >= 1");
    if (!(lambda_m >= 0)) throw ConfigError("lambda_m must be >= 0");
  }
  if (model == ModelKind::vsm && !(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must be in [0, 1)");
  if (freeze_beta_net && model != ModelKind::beta_vsm) throw ConfigError("freeze_beta_net applies to beta_vsm only");
  if (model == ModelKind::ef_protonet && ef_steps > 0 && !(ef_learning_rate > 0)) {
    throw ConfigError("ef_learning_rate must be > 0");
  }
  SamplerConfig sc;
  sc.support_size = support_size;
  sc.words_per_episode = words_per_episode;
  sc.senses_per_word = senses_per_word;
  sc.min_shots = min_shots;
  sc.validate();
  data.validate();
}

const std::vector<std::string>& hyper_profile_names() {
  static const std::vector<std::string> names = {"glove_gru", "elmo_mlp", "bert"};
  return names;
}

HyperProfile hyper_profile(const std::string& name, std::size_t support_size) {
  std::size_t col = 0;
  switch (support_size) {
    case 4: col = 0; break;
    case 8: col = 1; break;
    case 16: col = 2; break;
    case 32: col = 3; break;
    default: throw ConfigError("hyperparameter profiles exist for |S| in {4, 8, 16, 32}");
  }
  struct Row {
    double lr, lz, lm;
    std::size_t Lz, Lm;
  };
  // Per |S| = 4, 8, 16, 32.
  static const Row glove[4] = {{1e-5, 1e-3, 1e-4, 200, 150}, {1e-5, 1e-3, 1e-4, 200, 150},
                               {1e-4, 1e-4, 1e-3, 150, 150}, {1e-4, 1e-3, 1e-3, 150, 150}};
  static const Row elmo[4] = {{1e-5, 1e-4, 1e-4, 200, 150}, {1e-5, 1e-4, 1e-4, 200, 150},
                              {1e-4, 1e-3, 1e-3, 150, 150}, {1e-4, 1e-3, 1e-3, 150, 150}};
  static const Row bert[4] = {{5e-6, 1e-3, 1e-4, 200, 200}, {5e-6, 1e-3, 1e-4, 200, 200},
                              {1e-6, 1e-4, 1e-4, 150, 150}, {1e-4, 1e-3, 1e-4, 150, 100}};
  const Row* row = nullptr;
  HyperProfile p;
  p.name = name;
  if (name == "glove_gru") {
    row = &glove[col];
    p.arch = EncoderArch::bigru_linear;
    p.dim = 64;
  } else if (name == "elmo_mlp") {
    row = &elmo[col];
    p.arch = EncoderArch::mlp;
    p.dim = 256;
  } else if (name == "bert") {
    row = &bert[col];
    p.arch = EncoderArch::linear;
    p.dim = 192;
  } else {
    throw ConfigError("unknown profile '" + name + "'");
  }
  p.learning_rate = row->lr;
  p.lambda_z = row->lz;
  p.lambda_m = row->lm;
  p.L_z = row->Lz;
  p.L_m = row->Lm;
  p.batch_size = 16;
  return p;
}

void apply_profile(RunConfig& cfg, const HyperProfile& p) {
  cfg.profile = p.name;
  cfg.arch = p.arch;
  cfg.dim = p.dim;
  cfg.learning_rate = p.learning_rate;
  cfg.lambda_z = p.lambda_z;
  cfg.lambda_m = p.lambda_m;
  cfg.L_z = p.L_z;
  cfg.L_m = p.L_m;
  cfg.batch_size = p.batch_size;
}

json to_json(const SynthSpec& s) {
  return {{"num_words", s.num_words},
          {"senses_min", s.senses_min},
          {"senses_max", s.senses_max},
          {"examples_min", s.examples_min},
          {"examples_max", s.examples_max},
          {"dim", s.dim},
          {"separation", s.separation},
          {"sigma", s.sigma},
          {"length_min", s.length_min},
          {"length_max", s.length_max},
          {"context_signal", s.context_signal},
          {"background_sigma", s.background_sigma},
          {"archetypes", s.archetypes},
          {"archetype_jitter", s.archetype_jitter},
          {"static_targets", s.static_targets},
          {"max_retries", s.max_retries},
          {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const json& j) {
  const std::string w = "synth";
  SynthSpec s;
  std::set<std::string> keys;
  const json defaults = to_json(s);
  for (const auto& [k, v] : defaults.items()) keys.insert(k);
  check_keys(j, keys, w);
  read(j, "num_words", s.num_words, w);
  read(j, "senses_min", s.senses_min, w);
  read(j, "senses_max", s.senses_max, w);
  read(j, "examples_min", s.examples_min, w);
  read(j, "examples_max", s.examples_max, w);
  read(j, "dim", s.dim, w);
  read(j, "separation", s.separation, w);
  read(j, "sigma", s.sigma, w);
  read(j, "length_min", s.length_min, w);
  read(j, "length_max", s.length_max, w);
  read(j, "context_signal", s.context_signal, w);
  read(j, "background_sigma", s.background_sigma, w);
  read(j, "archetypes", s.archetypes, w);
  read(j, "archetype_jitter", s.archetype_jitter, w);
  read(j, "static_targets", s.static_targets, w);
  read(j, "max_retries", s.max_retries, w);
  read(j, "seed", s.seed, w);
  return s;
}

json to_json(const RunConfig& c) {
  json data = {{"split", {{"train", c.data.fractions.train},
                          {"validation", c.data.fractions.validation},
                          {"test", c.data.fractions.test}}},
               {"split_seed", c.data.split_seed},
               {"episode_seed", c.data.episode_seed}};
  if (c.data.synth) data["synth"] = to_json(*c.data.synth);
  if (c.data.corpus) data["corpus"] = files_to_json(*c.data.corpus);
  if (c.data.meta_train) data["meta_train"] = files_to_json(*c.data.meta_train);
  if (c.data.meta_validation) data["meta_validation"] = files_to_json(*c.data.meta_validation);
  if (c.data.meta_test) data["meta_test"] = files_to_json(*c.data.meta_test);
  return {{"model", to_string(c.model)},
          {"profile", c.profile},
          {"arch", to_string(c.arch)},
          {"dim", c.dim},
          {"distance", to_string(c.distance)},
          {"support_size", c.support_size},
          {"words_per_episode", c.words_per_episode},
          {"senses_per_word", c.senses_per_word},
          {"min_shots", c.min_shots},
          {"lambda_z", c.lambda_z},
          {"lambda_m", c.lambda_m},
          {"L_z", c.L_z},
          {"L_m", c.L_m},
          {"beta", c.beta},
          {"lookahead", c.lookahead},
          {"freeze_beta_net", c.freeze_beta_net},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"episodes", c.episodes},
          {"validation_every", c.validation_every},
          {"ef_steps", c.ef_steps},
          {"ef_learning_rate", c.ef_learning_rate},
          {"threads", c.threads},
          {"seeds", c.seeds},
          {"diagnostics_dir", c.diagnostics_dir.string()},
          {"data", data}};
}

RunConfig run_config_from_json(const json& j) {
  const std::string w = "config";
  RunConfig c;
  std::set<std::string> keys;
  const json defaults = to_json(c);
  for (const auto& [k, v] : defaults.items()) keys.insert(k);
  check_keys(j, keys, w);

  std::string s;
  if (j.contains("support_size")) read(j, "support_size", c.support_size, w);
  if (j.contains("profile")) {
    read(j, "profile", s, w);
    if (!s.empty()) apply_profile(c, hyper_profile(s, c.support_size));
  }
  try {
    if (j.contains("model")) c.model = parse_model_kind(j.at("model").get<std::string>());
    if (j.contains("arch")) c.arch = parse_encoder_arch(j.at("arch").get<std::string>());
    if (j.contains("distance")) c.distance = parse_distance(j.at("distance").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  read(j, "dim", c.dim, w);
  read(j, "words_per_episode", c.words_per_episode, w);
  read(j, "senses_per_word", c.senses_per_word, w);
  read(j, "min_shots", c.min_shots, w);
  read(j, "lambda_z", c.lambda_z, w);
  read(j, "lambda_m", c.lambda_m, w);
  read(j, "L_z", c.L_z, w);
  read(j, "L_m", c.L_m, w);
  read(j, "beta", c.beta, w);
  read(j, "lookahead", c.lookahead, w);
  read(j, "freeze_beta_net", c.freeze_beta_net, w);
  read(j, "learning_rate", c.learning_rate, w);
  read(j, "batch_size", c.batch_size, w);
  read(j, "episodes", c.episodes, w);
  read(j, "validation_every", c.validation_every, w);
  read(j, "ef_steps", c.ef_steps, w);
  read(j, "ef_learning_rate", c.ef_learning_rate, w);
  read(j, "threads", c.threads, w);
  read(j, "seeds", c.seeds, w);
  if (j.contains("diagnostics_dir")) {
    read(j, "diagnostics_dir", s, w);
    c.diagnostics_dir = s;
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"synth", "corpus", "meta_train", "meta_validation", "meta_test", "split", "split_seed", "episode_seed"},
               "data");
    if (d.contains("synth") && !d.at("synth").is_null()) c.data.synth = synth_spec_from_json(d.at("synth"));
    if (d.contains("corpus")) c.data.corpus = files_from_json(d.at("corpus"), "data.corpus");
    if (d.contains("meta_train")) c.data.meta_train = files_from_json(d.at("meta_train"), "data.meta_train");
    if (d.contains("meta_validation")) {
      c.data.meta_validation = files_from_json(d.at("meta_validation"), "data.meta_validation");
    }
    if (d.contains("meta_test")) c.data.meta_test = files_from_json(d.at("meta_test"), "data.meta_test");
    if (d.contains("split")) {
      const json& f = d.at("split");
      check_keys(f, {"train", "validation", "test"}, "data.split");
      read(f, "train", c.data.fractions.train, "data.split");
      read(f, "validation", c.data.fractions.validation, "data.split");
      read(f, "test", c.data.fractions.test, "data.split");
    }
    read(d, "split_seed", c.data.split_seed, "data");
    read(d, "episode_seed", c.data.episode_seed, "data");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

void set_config_value(json& doc, const std::string& dotted_key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json* node = &doc;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty config key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("config key '" + dotted_key + "' crosses a non-object");
    if (!node->contains(parts[i]) || (*node)[parts[i]].is_null()) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = parsed;
}

}  // namespace vsm
