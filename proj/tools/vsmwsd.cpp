// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// vsmwsd: few-shot word sense disambiguation with variational semantic memory.
// Every command writes line-delimited JSON to stdout and exits non-zero on any
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vsm/config.hpp"
#include "vsm/errors.hpp"
#include "vsm/harness.hpp"
#include "vsm/log.hpp"
#include "vsm/suites.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vsm;

namespace {

void emit(const json& j) { std::cout << j.dump() << std::endl; }

// Config file plus per-field overrides.
struct ConfigOptions {
  std::string path;
  std::vector<std::string> sets;
  std::optional<std::string> model, profile, arch, distance;
  std::optional<std::size_t> dim, support_size, L_z, L_m, batch_size, episodes, validation_every, threads, ef_steps;
  std::optional<double> lambda_z, lambda_m, beta, lr, ef_lr;
  std::optional<bool> lookahead;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", path, "run configuration (JSON)")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override any field: key=value, dotted for nesting (data.synth.separation=0)");
    app->add_option("--model", model, "protonet|ef_protonet|vpn|vsm|beta_vsm|nearest_neighbor|majority");
    app->add_option("--profile", profile, "named hyperparameter profile: glove_gru|elmo_mlp|bert");
    app->add_option("--arch", arch, "encoder: bigru_linear|mlp|linear");
    app->add_option("--distance", distance, "sq_euclidean|cosine");
    app->add_option("--dim", dim, "encoder output and memory dimension");
    app->add_option("--support-size", support_size, "|S| in {4, 8, 16, 32}");
    app->add_option("--lambda-z", lambda_z, "KL weight on z (the single lambda for vpn)");
    app->add_option("--lambda-m", lambda_m, "KL weight on m");
    app->add_option("--lz", L_z, "Monte Carlo samples of z");
    app->add_option("--lm", L_m, "Monte Carlo samples of m");
    app->add_option("--beta", beta, "fixed beta for vsm");
    app->add_option("--lookahead", lookahead, "recall from slots updated with the current support");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch-size", batch_size, "tasks per optimizer step");
    app->add_option("--episodes", episodes, "meta-train episode budget");
    app->add_option("--validation-every", validation_every, "episodes between meta-validation passes");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
    app->add_option("--ef-steps", ef_steps, "ef_protonet support-set gradient steps");
    app->add_option("--ef-lr", ef_lr, "ef_protonet step size");
  }

  RunConfig build(const std::vector<std::uint64_t>& seeds) const {
    json doc = json::object();
    if (!path.empty()) {
      std::ifstream in(path);
      doc = json::parse(in);
    }
    const auto put = [&](const char* key, const json& v) { doc[key] = v; };
    if (model) put("model", *model);
    if (profile) put("profile", *profile);
    if (arch) put("arch", *arch);
    if (distance) put("distance", *distance);
    if (dim) put("dim", *dim);
    if (support_size) put("support_size", *support_size);
    if (lambda_z) put("lambda_z", *lambda_z);
    if (lambda_m) put("lambda_m", *lambda_m);
    if (L_z) put("L_z", *L_z);
    if (L_m) put("L_m", *L_m);
    if (beta) put("beta", *beta);
    if (lookahead) put("lookahead", *lookahead);
    if (lr) put("learning_rate", *lr);
    if (batch_size) put("batch_size", *batch_size);
    if (episodes) put("episodes", *episodes);
    if (validation_every) put("validation_every", *validation_every);
    if (threads) put("threads", *threads);
    if (ef_steps) put("ef_steps", *ef_steps);
    if (ef_lr) put("ef_learning_rate", *ef_lr);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      set_config_value(doc, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!seeds.empty()) doc["seeds"] = seeds;
    RunConfig cfg = run_config_from_json(doc);
    cfg.validate();
    return cfg;
  }
};

const Corpus& split_of(const CorpusSplits& data, const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '_', '-');
  switch (parse_split(n)) {
    case Split::meta_train: return data.meta_train;
    case Split::meta_validation: return data.meta_validation;
    case Split::meta_test: return data.meta_test;
    default: throw ConfigError("--split must name meta-train, meta-validation or meta-test");
  }
}

fs::path seed_path(const fs::path& out, std::uint64_t seed, std::size_t n_seeds) {
  if (n_seeds == 1) return out;
  fs::path p = out;
  p.replace_filename(out.stem().string() + ".seed" + std::to_string(seed) + out.extension().string());
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vsmwsd: few-shot word sense disambiguation with variational semantic memory"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress to stderr");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and write its word-level splits");
  SynthSpec spec;
  std::string synth_out;
  SplitFractions fractions;
  std::uint64_t split_seed = 1;
  bool no_split = false;
  synth->add_option("--seed", spec.seed, "generator seed")->required();
  synth->add_option("--out-dir", synth_out, "output directory")->required();
  synth->add_option("--num-words", spec.num_words);
  synth->add_option("--senses-min", spec.senses_min);
  synth->add_option("--senses-max", spec.senses_max);
  synth->add_option("--examples-min", spec.examples_min);
  synth->add_option("--examples-max", spec.examples_max);
  synth->add_option("--dim", spec.dim);
  synth->add_option("--separation", spec.separation);
  synth->add_option("--sigma", spec.sigma);
  synth->add_option("--length-min", spec.length_min);
  synth->add_option("--length-max", spec.length_max);
  synth->add_option("--context-signal", spec.context_signal);
  synth->add_option("--background-sigma", spec.background_sigma);
  synth->add_option("--archetypes", spec.archetypes);
  synth->add_option("--archetype-jitter", spec.archetype_jitter);
  synth->add_flag("--static-targets", spec.static_targets);
  synth->add_option("--train-fraction", fractions.train);
  synth->add_option("--validation-fraction", fractions.validation);
  synth->add_option("--test-fraction", fractions.test);
  synth->add_option("--split-seed", split_seed);
  synth->add_flag("--no-split", no_split, "write a single corpus instead of three splits");

  // train
  auto* train = app.add_subcommand("train", "meta-train one checkpoint per seed");
  ConfigOptions train_cfg;
  train_cfg.attach(train);
  std::vector<std::uint64_t> train_seeds;
  std::string train_out, resume;
  train->add_option("--seed", train_seeds, "run seed(s)")->required();
  train->add_option("-o,--out", train_out, "checkpoint path (seed-suffixed when several seeds)")->required();
  train->add_option("--resume", resume, "continue this checkpoint up to the configured episode budget")
      ->check(CLI::ExistingFile);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on a split");
  std::vector<std::string> eval_ckpts;
  std::string eval_split = "meta-test", eval_out;
  eval->add_option("--checkpoint", eval_ckpts, "checkpoint(s), one per seed")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "meta-test or meta-validation");
  eval->add_option("-o,--out", eval_out, "report path (JSONL)")->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "train and evaluate a list of models on shared seeds");
  ConfigOptions abl_cfg;
  abl_cfg.attach(abl);
  std::vector<std::uint64_t> abl_seeds;
  std::vector<std::string> variants = {"protonet", "vpn", "vsm", "beta_vsm"};
  std::string abl_out;
  abl->add_option("--seed", abl_seeds, "run seeds")->required();
  abl->add_option("--variants", variants, "models to compare");
  abl->add_option("-o,--out", abl_out, "table path (JSONL)")->required();

  // breakdown
  auto* brk = app.add_subcommand("breakdown", "mean macro F1 by the word's sense count");
  std::vector<std::string> reports;
  std::string brk_out;
  brk->add_option("--report", reports, "eval report(s)")->required()->check(CLI::ExistingFile);
  brk->add_option("-o,--out", brk_out, "table path (JSONL)")->required();

  // export-prototypes
  auto* exp = app.add_subcommand("export-prototypes", "write class posteriors and query features of one episode");
  std::string exp_ckpt, exp_out, exp_word, exp_split = "meta-test";
  exp->add_option("--checkpoint", exp_ckpt)->required()->check(CLI::ExistingFile);
  exp->add_option("--word", exp_word, "episode word (default: first episode)");
  exp->add_option("--split", exp_split, "meta-test or meta-validation");
  exp->add_option("-o,--out", exp_out)->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "run the finite-difference gradient suites");
  double gc_tol = 1e-4;
  gc->add_option("--tolerance", gc_tol);

  CLI11_PARSE(app, argc, argv);

  if (verbose) {
    set_log_sink([](LogLevel, const std::string& msg) { std::cerr << msg << std::endl; });
  }

  try {
    if (*synth) {
      const Corpus corpus = synth_corpus(spec);
      fs::create_directories(synth_out);
      const fs::path dir(synth_out);
      const auto write = [&](const Corpus& c, const std::string& name) {
        write_corpus(c, dir / (name + ".meta.jsonl"), dir / (name + ".blob"));
        emit({{"type", "corpus"},
              {"split", name},
              {"records", c.records.size()},
              {"words", c.word_ids().size()},
              {"senses", c.num_senses()},
              {"meta", (dir / (name + ".meta.jsonl")).string()},
              {"blob", (dir / (name + ".blob")).string()}});
      };
      if (no_split) {
        write(corpus, "corpus");
      } else {
        const CorpusSplits s = split_corpus(corpus, fractions, split_seed);
        write(s.meta_train, "meta_train");
        write(s.meta_validation, "meta_validation");
        write(s.meta_test, "meta_test");
      }
      return 0;
    }

    if (*train) {
      std::optional<Checkpoint> resumed;
      RunConfig cfg;
      if (!resume.empty()) {
        resumed = load_checkpoint(resume);
        cfg = resumed->config;
        if (train_cfg.episodes) cfg.episodes = *train_cfg.episodes;
        if (train_seeds.size() != 1 || train_seeds[0] != resumed->seed) {
          throw ConfigError("--seed must repeat the checkpoint's seed " + std::to_string(resumed->seed));
        }
      } else {
        cfg = train_cfg.build(train_seeds);
      }
      const CorpusSplits data = load_data(cfg.data);
      for (std::uint64_t seed : train_seeds) {
        Checkpoint ck = resumed ? *resumed : init_checkpoint(cfg, data, seed);
        ck.config.episodes = cfg.episodes;
        TrainHooks hooks;
        hooks.on_batch = [&](std::uint64_t done, double loss) {
          if (done % cfg.validation_every < cfg.batch_size || done == cfg.episodes) {
            emit({{"type", "progress"}, {"seed", seed}, {"episodes", done}, {"batch_loss", loss}});
          }
        };
        continue_training(ck, data, hooks);
        const fs::path out = seed_path(train_out, seed, train_seeds.size());
        save_checkpoint(ck, out);
        emit({{"type", "checkpoint"},
              {"seed", seed},
              {"path", out.string()},
              {"model", to_string(cfg.model)},
              {"episodes", ck.episodes_done},
              {"best_validation_f1", ck.best ? json(ck.best_f1) : json(nullptr)},
              {"best_at", ck.best_episodes}});
      }
      return 0;
    }

    if (*eval) {
      std::vector<Checkpoint> ckpts;
      for (const auto& p : eval_ckpts) ckpts.push_back(load_checkpoint(p));
      const CorpusSplits data = load_data(ckpts.front().config.data);
      const MetaTestEpisodes eps = meta_test_episodes(ckpts.front().config, split_of(data, eval_split));
      const EvalReport report = evaluate(ckpts, eps.episodes);
      write_eval_report(report, eval_out);
      json means = json::array();
      for (const auto& s : report.seeds) means.push_back(s.mean);
      emit({{"type", "eval_report"},
            {"model", report.model},
            {"episodes", report.num_episodes()},
            {"skipped_words", eps.skipped_words.size()},
            {"mean", report.mean},
            {"std", report.std},
            {"seed_means", means},
            {"path", eval_out}});
      return 0;
    }

    if (*abl) {
      const RunConfig cfg = abl_cfg.build(abl_seeds);
      std::vector<ModelKind> kinds;
      for (const auto& v : variants) kinds.push_back(parse_model_kind(v));
      const CorpusSplits data = load_data(cfg.data);
      const auto rows = ablate(cfg, kinds, data);
      write_ablation_table(rows, abl_out);
      for (const auto& r : rows) {
        emit({{"type", "ablation"}, {"model", to_string(r.model)}, {"mean", r.mean}, {"std", r.std},
              {"seed_means", r.seed_means}});
      }
      return 0;
    }

    if (*brk) {
      std::vector<EvalReport> loaded;
      for (const auto& p : reports) loaded.push_back(load_eval_report(p));
      const auto buckets = breakdown_by_sense_count(loaded);
      write_breakdown_table(buckets, brk_out);
      for (const auto& b : buckets) {
        emit({{"type", "breakdown"}, {"num_senses", b.num_senses}, {"episodes", b.episodes}, {"mean", b.mean}});
      }
      return 0;
    }

    if (*exp) {
      const Checkpoint ck = load_checkpoint(exp_ckpt);
      const CorpusSplits data = load_data(ck.config.data);
      const MetaTestEpisodes eps = meta_test_episodes(ck.config, split_of(data, exp_split));
      const Episode* chosen = nullptr;
      for (const auto& e : eps.episodes) {
        if (exp_word.empty() || e.word_id == exp_word) {
          chosen = &e;
          break;
        }
      }
      if (!chosen) throw ArgumentError("no episode for word '" + exp_word + "'");
      const PrototypeExport e = export_prototypes(ck, *chosen);
      write_prototype_export(e, exp_out);
      emit({{"type", "prototypes"}, {"word_id", e.word_id}, {"classes", e.classes.size()},
            {"queries", e.queries.size()}, {"path", exp_out}});
      return 0;
    }

    if (*gc) {
      bool ok = true;
      for (const auto& s : run_gradient_suites(gc_tol)) {
        ok = ok && s.report.passed;
        emit({{"type", "gradcheck"},
              {"suite", s.name},
              {"passed", s.report.passed},
              {"coordinates", s.report.coordinates},
              {"max_rel_error", s.report.max_rel_error},
              {"seconds", s.seconds}});
      }
      return ok ? 0 : 1;
    }
  } catch (const DivergenceError& e) {
    emit({{"type", "error"}, {"kind", "divergence"}, {"message", e.what()}, {"episode", json::parse(e.diagnostic())}});
    return 3;
  } catch (const std::exception& e) {
    emit({{"type", "error"}, {"message", e.what()}});
    return 2;
  }
  return 1;
}
