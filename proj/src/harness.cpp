// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vsm/errors.hpp"
#include "vsm/log.hpp"
#include "vsm/protonet.hpp"

namespace vsm {

using json = nlohmann::json;

namespace {

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Runs fn(i, worker) for i in [0, n). Exceptions are rethrown for the
// lowest failing index after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  threads = std::min(resolve_threads(threads), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i, w);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

bool is_beta_param(const Param* p) { return p->name.rfind("beta.", 0) == 0; }

VsmHyper vsm_hyper(const RunConfig& cfg) { return VsmHyper{cfg.lambda_z, cfg.lambda_m, cfg.L_z, cfg.L_m, cfg.lookahead}; }

BetaConfig beta_config(const RunConfig& cfg) {
  if (cfg.model == ModelKind::vsm) return BetaConfig{BetaMode::fixed, cfg.beta};
  return BetaConfig{BetaMode::adaptive, 0.5};
}

SamplerConfig sampler_config(const RunConfig& cfg, std::uint64_t seed) {
  SamplerConfig s;
  s.support_size = cfg.support_size;
  s.words_per_episode = cfg.words_per_episode;
  s.senses_per_word = cfg.senses_per_word;
  s.min_shots = cfg.min_shots;
  s.num_episodes = cfg.episodes;
  s.seed = seed;
  return s;
}

// ---- serialization helpers ---------------------------------------------------

json tensor_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from_json(const json& j, const std::string& what) {
  const auto shape = j.at("shape").get<Shape>();
  const json& data = j.at("data");
  std::vector<double> values;
  values.reserve(data.size());
  for (const json& v : data) {
    if (!v.is_number()) throw FormatError(what + ": non-numeric or non-finite value");
    values.push_back(v.get<double>());
  }
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  if (n != values.size()) throw FormatError(what + ": shape does not match data length");
  return Tensor(shape, std::move(values));
}

json model_json(const ModelState& m) {
  json params = json::object();
  for (const Param* p : m.params()) {
    if (!p->value.all_finite()) throw EvaluationError("checkpoint: parameter " + p->name + " is not finite");
    params[p->name] = tensor_json(p->value);
  }
  json j = {{"kind", to_string(m.kind)}, {"params", params}};
  if (uses_memory(m.kind)) {
    j["memory"] = {{"senses", m.memory.senses()},
                   {"occupied", m.memory.occupied()},
                   {"slots", tensor_json(m.memory.slots())}};
  }
  return j;
}

ModelState model_from_json(const json& j, const RunConfig& cfg, std::size_t input_dim) {
  if (parse_model_kind(j.at("kind").get<std::string>()) != cfg.model) {
    throw FormatError("checkpoint: model kind differs from its config");
  }
  ModelState m = init_model(cfg, input_dim, {}, 0);
  const json& params = j.at("params");
  const auto all = m.params();
  if (params.size() != all.size()) throw FormatError("checkpoint: parameter count differs from the config");
  for (Param* p : all) {
    if (!params.contains(p->name)) throw FormatError("checkpoint: missing parameter " + p->name);
    Tensor v = tensor_from_json(params.at(p->name), p->name);
    if (v.shape() != p->value.shape()) throw DimensionError("checkpoint: " + p->name + " has shape " + shape_str(v.shape()));
    p->value = std::move(v);
    p->zero_grad();
  }
  if (uses_memory(cfg.model)) {
    const json& mem = j.at("memory");
    m.memory = MemoryStore::from_parts(mem.at("senses").get<std::vector<std::string>>(),
                                       tensor_from_json(mem.at("slots"), "memory"),
                                       mem.at("occupied").get<std::vector<bool>>());
  }
  return m;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv_tensor(std::uint64_t h, const Tensor& t) {
  for (auto s : t.shape()) h = fnv_bytes(h, &s, sizeof s);
  for (double v : t.values()) h = fnv_bytes(h, &v, sizeof v);
  return h;
}

json episode_dump(const Episode& ep, std::uint64_t index, double loss) {
  json support = json::array(), query = json::array();
  for (const auto& r : ep.support) support.push_back({r.record->sentence_id, r.class_index});
  for (const auto& r : ep.query) query.push_back({r.record->sentence_id, r.class_index});
  std::ostringstream l;
  l << loss;
  return {{"episode_index", index}, {"classes", ep.classes}, {"support", support}, {"query", query}, {"loss", l.str()}};
}

// ---- one training task -------------------------------------------------------

struct TaskResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::vector<std::vector<Tensor>> class_features;
};

TaskResult run_task(const ModelState& shared, const RunConfig& cfg, const Episode& ep, const NoiseKey& key) {
  ModelState local;
  local.kind = shared.kind;
  local.encoder = shared.encoder;
  local.vpn = shared.vpn;
  local.vsm = shared.vsm;
  const auto params = local.trainable(cfg);
  for (Param* p : params) p->zero_grad();

  TaskResult out;
  Graph g;
  Var loss;
  switch (cfg.model) {
    case ModelKind::protonet:
      loss = protonet_loss(g, local.encoder, ep, cfg.distance);
      break;
    case ModelKind::vpn:
      loss = vpn_loss(g, local.encoder, *local.vpn, ep, VpnHyper{cfg.lambda_z, cfg.L_z}, key);
      break;
    case ModelKind::vsm:
    case ModelKind::beta_vsm: {
      VsmForward f = vsm_forward(g, local.encoder, *local.vsm, shared.memory, ep, vsm_hyper(cfg), beta_config(cfg), key);
      loss = f.loss;
      out.class_features = std::move(f.class_features);
      break;
    }
    default:
      throw UnsupportedError("model " + to_string(cfg.model) + " is not trained");
  }
  out.loss = loss.item();
  if (!std::isfinite(out.loss)) return out;
  g.backward(loss);
  for (Param* p : params) out.grads.push_back(std::move(p->grad));
  return out;
}

double validate_model(const Checkpoint& ck, const std::vector<Episode>& episodes) {
  Checkpoint view;
  view.config = ck.config;
  view.seed = ck.seed;
  view.input_dim = ck.input_dim;
  view.model = ck.model;
  return evaluate_seed(view, episodes).mean;
}

}  // namespace

// ---- model state -------------------------------------------------------------

std::vector<Param*> ModelState::params() {
  std::vector<Param*> out = encoder.store.all();
  if (vpn) {
    for (Param* p : vpn->store.all()) out.push_back(p);
  }
  if (vsm) {
    for (Param* p : vsm->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> ModelState::params() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<ModelState*>(this)->params()) out.push_back(p);
  return out;
}

std::vector<Param*> ModelState::trainable(const RunConfig& cfg) {
  if (!is_trainable(kind)) return {};
  std::vector<Param*> out;
  for (Param* p : params()) {
    if (is_beta_param(p) && (kind == ModelKind::vsm || cfg.freeze_beta_net)) continue;
    out.push_back(p);
  }
  return out;
}

ModelState init_model(const RunConfig& cfg, std::size_t input_dim, const SenseInventory& inventory,
                      std::uint64_t seed) {
  ModelState m;
  m.kind = cfg.model;
  m.encoder = init_encoder(cfg.arch, input_dim, cfg.dim, seed);
  if (cfg.model == ModelKind::vpn) m.vpn = init_inference_nets(cfg.dim, 0, seed);
  if (uses_memory(cfg.model)) {
    m.vsm = init_vsm_nets(cfg.dim, seed);
    m.memory = MemoryStore::for_inventory(inventory, cfg.dim);
  }
  return m;
}

std::uint64_t state_hash(const ModelState& m) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const Param* p : m.params()) {
    h = fnv_bytes(h, p->name.data(), p->name.size());
    h = fnv_tensor(h, p->value);
  }
  for (const auto& s : m.memory.senses()) h = fnv_bytes(h, s.data(), s.size());
  for (bool b : m.memory.occupied()) {
    const unsigned char c = b ? 1 : 0;
    h = fnv_bytes(h, &c, 1);
  }
  return fnv_tensor(h, m.memory.slots());
}

// ---- checkpoints -------------------------------------------------------------

std::string serialize_checkpoint(const Checkpoint& c) {
  json adam = json::object();
  for (const auto& [name, mom] : c.adam_state) adam[name] = {{"m", tensor_json(mom.m)}, {"v", tensor_json(mom.v)}};
  json validation = json::array();
  for (const auto& v : c.validation) validation.push_back({v.episodes, v.macro_f1});
  for (double l : c.loss_trace) {
    if (!std::isfinite(l)) throw EvaluationError("checkpoint: non-finite loss in trace");
  }
  const json body = {{"format", "vsm-checkpoint"},
                     {"version", kCheckpointVersion},
                     {"config", to_json(c.config)},
                     {"seed", c.seed},
                     {"input_dim", c.input_dim},
                     {"model", model_json(c.model)},
                     {"best", c.best ? model_json(*c.best) : json(nullptr)},
                     {"best_f1", c.best_f1},
                     {"best_episodes", c.best_episodes},
                     {"adam_steps", c.adam_steps},
                     {"adam_state", adam},
                     {"episodes_done", c.episodes_done},
                     {"loss_trace", c.loss_trace},
                     {"validation", validation}};
  const std::string text = body.dump();
  const std::uint64_t sum = fnv1a64(reinterpret_cast<const unsigned char*>(text.data()), text.size());
  return std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion) + " " + hex64(sum) + "\n" + text;
}

Checkpoint parse_checkpoint(const std::string& text) {
  const auto nl = text.find('\n');
  if (nl == std::string::npos) throw FormatError("checkpoint: missing header line");
  std::istringstream header(text.substr(0, nl));
  std::string magic, version, sum;
  header >> magic >> version >> sum;
  if (magic != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  if (version != "v" + std::to_string(kCheckpointVersion)) {
    throw FormatError("checkpoint: unsupported version " + version + " (expected v" +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::string body = text.substr(nl + 1);
  const std::uint64_t actual = fnv1a64(reinterpret_cast<const unsigned char*>(body.data()), body.size());
  if (sum != hex64(actual)) throw FormatError("checkpoint: checksum mismatch (truncated or corrupted file)");
  try {
    const json j = json::parse(body);
    Checkpoint c;
    c.config = run_config_from_json(j.at("config"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.model = model_from_json(j.at("model"), c.config, c.input_dim);
    if (!j.at("best").is_null()) c.best = model_from_json(j.at("best"), c.config, c.input_dim);
    c.best_f1 = j.at("best_f1").get<double>();
    c.best_episodes = j.at("best_episodes").get<std::uint64_t>();
    c.adam_steps = j.at("adam_steps").get<std::uint64_t>();
    for (const auto& [name, mom] : j.at("adam_state").items()) {
      c.adam_state[name] = {tensor_from_json(mom.at("m"), name), tensor_from_json(mom.at("v"), name)};
    }
    c.episodes_done = j.at("episodes_done").get<std::uint64_t>();
    c.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    for (const json& v : j.at("validation")) c.validation.push_back({v.at(0).get<std::uint64_t>(), v.at(1).get<double>()});
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string text = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_checkpoint(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- training ----------------------------------------------------------------

Checkpoint init_checkpoint(const RunConfig& cfg, const CorpusSplits& data, std::uint64_t seed) {
  cfg.validate();
  Checkpoint c;
  c.config = cfg;
  c.seed = seed;
  c.input_dim = data.meta_train.dim;
  c.model = init_model(cfg, c.input_dim, data.meta_train.sense_inventory, seed);
  return c;
}

MetaTestEpisodes meta_test_episodes(const RunConfig& cfg, const Corpus& corpus) {
  return build_meta_test_episodes(corpus, cfg.support_size, cfg.data.episode_seed);
}

void continue_training(Checkpoint& ck, const CorpusSplits& data, const TrainHooks& hooks) {
  const RunConfig& cfg = ck.config;
  if (!is_trainable(cfg.model)) return;
  if (data.meta_train.dim != ck.input_dim) {
    throw DimensionError("meta-train embeddings have dim " + std::to_string(data.meta_train.dim) +
                         ", checkpoint expects " + std::to_string(ck.input_dim));
  }
  const EpisodeSampler sampler(data.meta_train, sampler_config(cfg, ck.seed));
  const std::vector<Episode> validation = meta_test_episodes(cfg, data.meta_validation).episodes;
  Adam adam(AdamConfig{cfg.learning_rate});
  adam.restore(ck.adam_steps, ck.adam_state);
  const auto params = ck.model.trainable(cfg);

  while (ck.episodes_done < cfg.episodes) {
    if (hooks.stop_after && ck.episodes_done >= *hooks.stop_after) break;
    const std::uint64_t start = ck.episodes_done;
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(cfg.batch_size, cfg.episodes - start));
    std::vector<Episode> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back(sampler.sample(start + i));

    std::vector<TaskResult> results(n);
    parallel_for(n, cfg.threads, [&](std::size_t i, std::size_t) {
      results[i] = run_task(ck.model, cfg, batch[i], NoiseKey(ck.seed).with(NoiseStream::train).with(start + i));
    });

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(results[i].loss)) {
        const std::string dump = episode_dump(batch[i], start + i, results[i].loss).dump();
        std::string where;
        if (!cfg.diagnostics_dir.empty()) {
          std::filesystem::create_directories(cfg.diagnostics_dir);
          const auto file = cfg.diagnostics_dir / ("divergence_seed" + std::to_string(ck.seed) + "_episode" +
                                                   std::to_string(start + i) + ".json");
          std::ofstream(file) << dump << "\n";
          where = " (dumped to " + file.string() + ")";
        }
        throw DivergenceError("training diverged: non-finite loss on meta-train episode " + std::to_string(start + i) +
                                  where,
                              dump);
      }
      total += results[i].loss;
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      params[k]->zero_grad();
      auto acc = params[k]->grad.span();
      for (std::size_t i = 0; i < n; ++i) {
        const auto src = results[i].grads[k].span();
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += src[j];
      }
    }
    adam.step(params);
    if (uses_memory(cfg.model)) {
      for (std::size_t i = 0; i < n; ++i) {
        commit_episode(ck.model.memory, *ck.model.vsm, batch[i], results[i].class_features, beta_config(cfg));
      }
    }
    ck.episodes_done += n;
    ck.loss_trace.push_back(total);
    ck.adam_steps = adam.steps();
    if (hooks.on_batch) hooks.on_batch(ck.episodes_done, total);

    const bool crossed = start / cfg.validation_every != ck.episodes_done / cfg.validation_every;
    if ((crossed || ck.episodes_done == cfg.episodes) && !validation.empty()) {
      const double f1 = validate_model(ck, validation);
      ck.validation.push_back({ck.episodes_done, f1});
      log_info(to_string(cfg.model) + " seed " + std::to_string(ck.seed) + " episodes " +
               std::to_string(ck.episodes_done) + " loss " + std::to_string(total) + " validation F1 " +
               std::to_string(f1));
      if (!ck.best || f1 > ck.best_f1) {
        ck.best = ck.model;
        ck.best_f1 = f1;
        ck.best_episodes = ck.episodes_done;
      }
    }
  }
  ck.adam_steps = adam.steps();
  ck.adam_state = adam.state();
}

Checkpoint meta_train(const RunConfig& cfg, const CorpusSplits& data, std::uint64_t seed, const TrainHooks& hooks) {
  Checkpoint c = init_checkpoint(cfg, data, seed);
  continue_training(c, data, hooks);
  return c;
}

// ---- evaluation --------------------------------------------------------------

std::vector<std::size_t> predict_episode(ModelState& model, const RunConfig& cfg, const Episode& ep,
                                         std::uint64_t seed) {
  const NoiseKey key = NoiseKey(seed).with(NoiseStream::eval).with(ep.id);
  std::vector<std::size_t> support_labels;
  for (const auto& s : ep.support) support_labels.push_back(s.class_index);
  std::vector<std::size_t> out;
  switch (cfg.model) {
    case ModelKind::majority: {
      out.assign(ep.query.size(), majority_sense(support_labels));
      return out;
    }
    case ModelKind::nearest_neighbor: {
      std::vector<Tensor> support;
      for (const auto& s : ep.support) support.push_back(s.record->target_embedding());
      for (const auto& q : ep.query) out.push_back(nearest_neighbor(q.record->target_embedding(), support, support_labels));
      return out;
    }
    default:
      break;
  }
  std::vector<Tensor> probs;
  switch (cfg.model) {
    case ModelKind::protonet:
      probs = predict_protonet(model.encoder, ep, cfg.distance);
      break;
    case ModelKind::ef_protonet:
      probs = predict_ef_protonet(model.encoder, ep, cfg.ef_steps, cfg.ef_learning_rate, cfg.distance);
      break;
    case ModelKind::vpn:
      probs = predict_vpn(model.encoder, *model.vpn, ep, cfg.L_z, key);
      break;
    default:
      probs = predict_vsm(model.encoder, *model.vsm, ep, cfg.L_z, cfg.L_m, key);
      break;
  }
  for (const Tensor& p : probs) out.push_back(argmax(p));
  return out;
}

SeedReport evaluate_seed(const Checkpoint& ckpt, const std::vector<Episode>& episodes) {
  const ModelState& model = ckpt.selected();
  for (const Episode& ep : episodes) {
    for (const auto* set : {&ep.support, &ep.query}) {
      for (const auto& r : *set) {
        if (r.record->dim() != ckpt.input_dim) {
          throw DimensionError("episode " + std::to_string(ep.id) + " has embedding dim " +
                               std::to_string(r.record->dim()) + ", checkpoint expects " +
                               std::to_string(ckpt.input_dim));
        }
      }
    }
  }
  const std::uint64_t before = state_hash(model);
  const std::size_t threads = std::min(resolve_threads(ckpt.config.threads), std::max<std::size_t>(1, episodes.size()));
  std::vector<std::optional<ModelState>> copies(threads);
  SeedReport report;
  report.seed = ckpt.seed;
  report.episodes.resize(episodes.size());
  parallel_for(episodes.size(), threads, [&](std::size_t i, std::size_t w) {
    if (!copies[w]) copies[w] = model;
    const Episode& ep = episodes[i];
    EpisodeScore& s = report.episodes[i];
    s.id = ep.id;
    s.word_id = ep.word_id;
    s.num_senses = ep.num_classes();
    s.predictions = predict_episode(*copies[w], ckpt.config, ep, ckpt.seed);
    for (const auto& q : ep.query) s.golds.push_back(q.class_index);
    s.macro_f1 = macro_f1(s.predictions, s.golds, ep.num_classes());
  });
  if (state_hash(model) != before) throw EvaluationError("evaluation modified the model state");
  double total = 0.0;
  for (const auto& e : report.episodes) total += e.macro_f1;
  report.mean = report.episodes.empty() ? 0.0 : total / static_cast<double>(report.episodes.size());
  return report;
}

EvalReport evaluate(const std::vector<Checkpoint>& ckpts, const std::vector<Episode>& episodes) {
  if (ckpts.empty()) throw ArgumentError("evaluate: no checkpoints");
  EvalReport r;
  r.model = to_string(ckpts.front().config.model);
  r.support_size = ckpts.front().config.support_size;
  for (const Checkpoint& c : ckpts) {
    if (c.config.model != ckpts.front().config.model || c.input_dim != ckpts.front().input_dim ||
        c.config.dim != ckpts.front().config.dim) {
      throw ArgumentError("evaluate: checkpoints differ in model kind or dims");
    }
    r.seeds.push_back(evaluate_seed(c, episodes));
  }
  r.finalize();
  r.validate();
  return r;
}

// ---- ablation and tables -----------------------------------------------------

std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<ModelKind>& variants,
                                const CorpusSplits& data) {
  std::vector<ModelKind> order = variants;
  std::stable_sort(order.begin(), order.end(), [](ModelKind a, ModelKind b) { return ladder_rank(a) < ladder_rank(b); });
  order.erase(std::unique(order.begin(), order.end()), order.end());
  const std::vector<Episode> test = meta_test_episodes(base, data.meta_test).episodes;
  std::vector<AblationRow> rows;
  for (ModelKind kind : order) {
    RunConfig cfg = base;
    cfg.model = kind;
    cfg.freeze_beta_net = cfg.freeze_beta_net && kind == ModelKind::beta_vsm;
    AblationRow row;
    row.model = kind;
    row.seeds = base.seeds;
    for (std::uint64_t seed : base.seeds) {
      const Checkpoint ck = meta_train(cfg, data, seed);
      row.seed_means.push_back(evaluate_seed(ck, test).mean);
    }
    const MeanStd ms = mean_std(row.seed_means);
    row.mean = ms.mean;
    row.std = ms.std;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const AblationRow& r : rows) {
    out << json{{"type", "ablation"},
                {"model", to_string(r.model)},
                {"mean", r.mean},
                {"std", r.std},
                {"seeds", r.seeds},
                {"seed_means", r.seed_means}}
               .dump()
        << "\n";
  }
}

void write_breakdown_table(const std::vector<SenseCountBucket>& buckets, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const SenseCountBucket& b : buckets) {
    out << json{{"type", "breakdown"}, {"num_senses", b.num_senses}, {"episodes", b.episodes}, {"mean", b.mean}}.dump()
        << "\n";
  }
}

// ---- prototype export --------------------------------------------------------

PrototypeExport export_prototypes(const Checkpoint& ckpt, const Episode& ep) {
  if (!is_variational(ckpt.config.model)) {
    throw UnsupportedError("export_prototypes needs a variational model, not " + to_string(ckpt.config.model));
  }
  ep.validate();
  ModelState m = ckpt.selected();
  Graph g;
  const EpisodeReps reps = encode_episode(g, m.encoder, ep);
  std::vector<Var> pooled;
  for (const auto& group : reps.groups) pooled.push_back(mean_support_representation(group));
  Var P = stack_rows(pooled);

  PrototypeExport out;
  out.model = to_string(ckpt.config.model);
  out.episode_id = ep.id;
  out.word_id = ep.word_id;
  GaussianDiag z;
  std::optional<GaussianDiag> mem;
  if (m.vpn) {
    z = infer_posterior_z(g, *m.vpn, P).value();
  } else {
    const GaussianVar prior = memory_prior(g, m.vsm->memory, P);
    mem = prior.value();
    z = infer_posterior_z(g, m.vsm->z, P, prior.mean).value();
  }
  const auto sigma = [](const Tensor& lv, std::size_t r) {
    std::vector<double> s;
    for (std::size_t j = 0; j < lv.cols(); ++j) s.push_back(std::exp(0.5 * lv.at(r, j)));
    return s;
  };
  for (std::size_t c = 0; c < ep.num_support_classes; ++c) {
    ClassExport ce;
    ce.sense_id = ep.classes[c];
    ce.mu_z = z.mean.row(c).values();
    ce.sigma_z = sigma(z.log_var, c);
    if (mem) {
      ce.mu_m = mem->mean.row(c).values();
      ce.sigma_m = sigma(mem->log_var, c);
    }
    out.classes.push_back(std::move(ce));
  }
  for (std::size_t i = 0; i < ep.query.size(); ++i) {
    out.queries.push_back({ep.query[i].record->sentence_id, ep.query[i].class_index, reps.query[i].value().values()});
  }
  return out;
}

void write_prototype_export(const PrototypeExport& e, const std::filesystem::path& path) {
  json classes = json::array(), queries = json::array();
  for (const auto& c : e.classes) {
    json jc = {{"sense_id", c.sense_id}, {"mu_z", c.mu_z}, {"sigma_z", c.sigma_z}};
    if (!c.mu_m.empty()) {
      jc["mu_m"] = c.mu_m;
      jc["sigma_m"] = c.sigma_m;
    }
    classes.push_back(std::move(jc));
  }
  for (const auto& q : e.queries) {
    queries.push_back({{"sentence_id", q.sentence_id}, {"label", q.label}, {"representation", q.representation}});
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << json{{"format", "vsm-prototypes"},
              {"version", 1},
              {"model", e.model},
              {"episode_id", e.episode_id},
              {"word_id", e.word_id},
              {"classes", classes},
              {"queries", queries}}
             .dump(1)
      << "\n";
}

PrototypeExport load_prototype_export(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format") != "vsm-prototypes" || j.at("version") != 1) throw FormatError("not a prototype export");
    PrototypeExport e;
    e.model = j.at("model").get<std::string>();
    e.episode_id = j.at("episode_id").get<std::uint64_t>();
    e.word_id = j.at("word_id").get<std::string>();
    for (const json& c : j.at("classes")) {
      ClassExport ce;
      ce.sense_id = c.at("sense_id").get<std::string>();
      ce.mu_z = c.at("mu_z").get<std::vector<double>>();
      ce.sigma_z = c.at("sigma_z").get<std::vector<double>>();
      if (c.contains("mu_m")) {
        ce.mu_m = c.at("mu_m").get<std::vector<double>>();
        ce.sigma_m = c.at("sigma_m").get<std::vector<double>>();
      }
      e.classes.push_back(std::move(ce));
    }
    for (const json& q : j.at("queries")) {
      e.queries.push_back({q.at("sentence_id").get<std::string>(), q.at("label").get<std::size_t>(),
                           q.at("representation").get<std::vector<double>>()});
    }
    return e;
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
}

}  // namespace vsm
