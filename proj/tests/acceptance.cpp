// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS or FAIL line per criterion, followed by
// indented detail lines, and exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "vsm/harness.hpp"
#include "vsm/protonet.hpp"
#include "vsm/suites.hpp"
#include "vsm/vpn.hpp"
#include "vsm/vsm.hpp"

using namespace vsm;
using vsm::testing::ClusterEpisode;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void note(const std::string& s) { details.push_back(s); }
  void require(bool ok, const std::string& s) {
    pass = pass && ok;
    details.push_back((ok ? "ok    " : "FAIL  ") + s);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criteria ----------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  for (const GradientSuite& s : run_gradient_suites(1e-4)) {
    o.require(s.report.passed, fmt("%-24s %zu coordinates, max rel error %.3g", s.name.c_str(),
                                   s.report.coordinates, s.report.max_rel_error));
  }
  const double secs = seconds_since(t0);
  o.require(secs <= 60.0, fmt("runtime %.2f s (limit 60 s)", secs));
  return o;
}

double kl_quadrature(double mq, double vq, double mp, double vp) {
  // Composite Simpson on [mq - 14 sd, mq + 14 sd].
  auto logn = [](double x, double m, double v) { return -0.5 * (std::log(2 * std::numbers::pi * v) + (x - m) * (x - m) / v); };
  const double sd = std::sqrt(vq), a = mq - 14 * sd, b = mq + 14 * sd;
  const int n = 20000;
  const double h = (b - a) / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double f = std::exp(logn(x, mq, vq)) * (logn(x, mq, vq) - logn(x, mp, vp));
    s += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  return s * h / 3;
}

Outcome closed_form_kl() {
  Outcome o;
  auto diag = [](std::vector<double> mu, std::vector<double> lv) {
    return GaussianDiag{Tensor::vector(mu), Tensor::vector(lv)};
  };
  const double k0 = kl_diag_gauss(diag({0, 0}, {0, 0}), diag({0, 0}, {0, 0}));
  o.require(k0 == 0.0, fmt("KL(N(0,I) || N(0,I)) = %.17g (expected 0)", k0));
  const double k1 = kl_diag_gauss(diag({1, 0}, {0, 0}), diag({0, 0}, {0, 0}));
  o.require(std::abs(k1 - 0.5) <= 1e-15, fmt("KL(N((1,0),I) || N(0,I)) = %.17g (expected |mu|^2/2 = 0.5)", k1));
  const double k2 = kl_diag_gauss(diag({0.3, -1.2, 2.0}, {0, 0, 0}), diag({0, 0, 0}, {0, 0, 0}));
  o.require(std::abs(k2 - 0.5 * (0.09 + 1.44 + 4.0)) <= 1e-14, fmt("3-d unit-variance case = %.17g", k2));
  const double k3 = kl_diag_gauss(diag({1.0}, {std::log(0.25)}), diag({0.0}, {0.0}));
  const double quad = kl_quadrature(1.0, 0.25, 0.0, 1.0);
  o.require(std::abs(k3 - 0.81815) <= 1e-4, fmt("KL(N(1,0.25) || N(0,1)) = %.10f (expected 0.81815 +- 1e-4)", k3));
  o.require(std::abs(k3 - quad) <= 1e-9, fmt("Simpson quadrature of q log(q/p) = %.10f", quad));
  return o;
}

RunConfig quick_config(ModelKind kind, const SynthSpec& spec) {
  RunConfig cfg;
  cfg.model = kind;
  cfg.data.synth = spec;
  cfg.threads = 0;
  return cfg;
}

SynthSpec ladder_spec() {
  SynthSpec s;
  s.num_words = 24;
  s.senses_min = 2;
  s.senses_max = 4;
  s.examples_min = 12;
  s.examples_max = 16;
  s.dim = 6;
  s.seed = 17;
  return s;
}

Outcome reduction_ladder() {
  Outcome o;
  {
    ClusterEpisode fx(3, 4, 5, 1.0, 11);
    EncoderParams enc = init_encoder(EncoderArch::mlp, 5, 5, 3);
    const NoiseBank eps = draw_prototype_noise(NoiseKey(8), 50, 3, 5);
    Graph g;
    const EpisodeReps reps = encode_episode(g, enc, fx.episode);
    Var means = stack_rows(compute_prototypes(reps.groups));
    Tensor lv(means.shape());
    lv.fill(-60.0);
    const double vpn = vpn_objective({means, g.constant(lv)}, stack_rows(reps.query), query_labels(fx.episode),
                                     std::nullopt, 0.0, eps)
                           .item();
    Graph g2;
    const double proto = protonet_loss(g2, enc, fx.episode).item();
    o.require(std::abs(vpn - proto) <= 1e-9,
              fmt("(a) vpn %.15f vs protonet %.15f, |diff| %.2e", vpn, proto, std::abs(vpn - proto)));
  }
  {
    ClusterEpisode fx(3, 3, 4, 1.0, 21);
    EncoderParams enc = init_encoder(EncoderArch::mlp, 4, 4, 2);
    InferenceNets vpn_nets = init_inference_nets(4, 0, 3);
    VsmNets nets = init_vsm_nets(4, 9);
    nets.z.store.assign(vpn_nets.store);
    nets.z.store.at("z.post.l1.Wside").value.fill(0.0);
    SenseInventory inv{{"w", fx.episode.classes}, {"other", {"other.s0", "other.s1"}}};
    MemoryStore memory = MemoryStore::for_inventory(inv, 4);
    memory.set_row(memory.slot_of("other.s0"), Tensor::vector({0.5, 0.1, -0.2, 0.3}));
    double worst = 0;
    for (bool lookahead : {false, true}) {
      for (std::size_t Lm : {1u, 3u}) {
        Graph g1, g2;
        const double vsm =
            vsm_loss(g1, enc, nets, memory, fx.episode, VsmHyper{0.7, 0.0, 6, Lm, lookahead}, {}, NoiseKey(44)).item();
        const double vpn = vpn_loss(g2, enc, vpn_nets, fx.episode, VpnHyper{0.7, 6}, NoiseKey(44)).item();
        worst = std::max(worst, std::abs(vsm - static_cast<double>(fx.episode.query.size()) * vpn));
      }
    }
    o.require(worst <= 1e-9, fmt("(b) vsm vs |Q| * vpn over lookahead x L_m grid, max |diff| %.2e", worst));
  }
  {
    const double bias = 0.8;
    Graph g0;
    const double beta = activation(Activation::sigmoid, g0.constant(Tensor::scalar(bias))).item();
    const SynthSpec spec = ladder_spec();
    const CorpusSplits data = load_data(quick_config(ModelKind::vsm, spec).data);

    RunConfig cb = quick_config(ModelKind::beta_vsm, spec);
    cb.dim = 6;
    cb.support_size = 4;
    cb.L_z = 3;
    cb.L_m = 3;
    cb.learning_rate = 1e-2;
    cb.batch_size = 4;
    cb.episodes = 120;
    cb.validation_every = 40;
    cb.freeze_beta_net = true;
    RunConfig cv = cb;
    cv.model = ModelKind::vsm;
    cv.freeze_beta_net = false;
    cv.beta = beta;

    Checkpoint a = init_checkpoint(cb, data, 3);
    for (Param* p : a.model.vsm->memory.store.all()) {
      if (p->name.rfind("beta.", 0) == 0) p->value.fill(0.0);
    }
    a.model.vsm->memory.store.at("beta.out.b").value.fill(bias);
    Checkpoint b = init_checkpoint(cv, data, 3);
    continue_training(a, data);
    continue_training(b, data);
    const bool same_trace = a.loss_trace == b.loss_trace;
    const bool same_memory = a.model.memory == b.model.memory;
    const auto eps = meta_test_episodes(cb, data.meta_test).episodes;
    const EvalReport ra = evaluate({a}, eps), rb = evaluate({b}, eps);
    o.require(same_trace && same_memory && ra.mean == rb.mean,
              fmt("(c) beta-vsm with constant f_beta = %.17g vs fixed-beta vsm: %zu-batch loss traces %s, memory %s, "
                  "meta-test F1 %.6f vs %.6f",
                  beta, a.loss_trace.size(), same_trace ? "identical" : "differ",
                  same_memory ? "identical" : "differs", ra.mean, rb.mean));
  }
  return o;
}

Outcome memory_invariants() {
  Outcome o;
  const std::size_t d = 5, slots = 12;
  SenseInventory inv;
  for (std::size_t s = 0; s < slots; ++s) inv["w" + std::to_string(s / 3)].push_back("s" + std::to_string(s));
  MemoryStore memory = MemoryStore::for_inventory(inv, d);
  double max_norm = 0, gamma_err = 0, alpha_err = 0, beta_min = 1, beta_max = 0;
  std::size_t gamma_checks = 0;
  MemoryNets nets;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const NoiseKey key = NoiseKey(901).with(t);
    if (t % 100 == 0) {
      nets = init_memory_nets(d, 50 + t);
      // Larger weights push f_beta toward its saturating range.
      const double s = 1.0 + static_cast<double>(t / 100);
      for (Param* p : nets.store.all()) {
        for (double& v : p->value.span()) v *= s;
      }
    }
    Tensor pooled = key.with(1).normals({d});
    for (double& v : pooled.span()) v *= 0.1 + 4.0 * key.uniform(2);
    if (const auto gamma = recall_attention(memory, pooled)) {
      double sum = 0;
      for (double x : gamma->values()) sum += x;
      gamma_err = std::max(gamma_err, std::abs(sum - 1.0));
      ++gamma_checks;
    }
    const std::string sense = memory.senses()[key.bits(3) % slots];
    Graph g;
    Var anchor = g.constant(memory.occupied()[memory.slot_of(sense)] ? memory.row(memory.slot_of(sense)) : pooled);
    std::vector<Var> feats;
    for (std::size_t i = 0; i < 1 + key.bits(4) % 8; ++i) {
      Tensor f = key.with({5, i}).normals({d});
      for (double& v : f.span()) v *= 3.0;
      feats.push_back(g.constant(f));
    }
    const UpdateCandidate cand = graph_attention_aggregate(g, nets, anchor, feats);
    double asum = 0;
    for (double x : cand.alpha.value().values()) asum += x;
    alpha_err = std::max(alpha_err, std::abs(asum - 1.0));
    const double beta = adaptive_beta(g, nets, cand.mbar).item();
    beta_min = std::min(beta_min, beta);
    beta_max = std::max(beta_max, beta);
    update_memory(memory, sense, cand.mbar.value(), beta);
    for (std::size_t r = 0; r < memory.size(); ++r) max_norm = std::max(max_norm, l2_norm(memory.row(r).span()));
  }
  o.require(max_norm <= 1.0, fmt("max slot norm after 1000 cycles %.17g (limit 1)", max_norm));
  o.require(gamma_err <= 1e-12, fmt("gamma sums to 1, max error %.2e over %zu recalls", gamma_err, gamma_checks));
  o.require(alpha_err <= 1e-12, fmt("graph-attention alpha sums to 1, max error %.2e", alpha_err));
  o.require(beta_min > 0.0 && beta_max < 1.0, fmt("beta range [%.6g, %.6g] inside (0, 1)", beta_min, beta_max));
  o.note(fmt("occupied slots at the end: %zu of %zu", memory.num_occupied(), memory.size()));
  return o;
}

Outcome mixture_sampling() {
  Outcome o;
  MemoryNets nets = init_memory_nets(2, 3);
  Graph g;
  Var slots = g.constant(Tensor::matrix(3, 2, {0.9, 0.0, -0.5, 0.5, 0.0, -0.8}));
  const Tensor gamma = Tensor::vector({0.2, 0.5, 0.3});
  Tensor lg(Shape{1, 3});
  for (std::size_t a = 0; a < 3; ++a) lg.at(0, a) = std::log(gamma[a]);
  const std::size_t L = 100000;
  const MemoryPosterior post = memory_posterior(g, nets, slots, g.constant(lg), L, NoiseKey(5));
  const GaussianDiag comp = post.components.value();
  for (std::size_t j = 0; j < 2; ++j) {
    double mix = 0, second = 0, sample = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double mu = comp.mean.at(a, j), var = std::exp(comp.log_var.at(a, j));
      mix += gamma[a] * mu;
      second += gamma[a] * (var + mu * mu);
    }
    for (const auto& s : post.samples) sample += s.value().at(0, j) / static_cast<double>(L);
    const double se = std::sqrt((second - mix * mix) / static_cast<double>(L));
    o.require(std::abs(sample - mix) <= 3 * se,
              fmt("dim %zu: sample mean %.6f, sum gamma_a mu_a %.6f, |diff| = %.2f SE", j, sample, mix,
                  std::abs(sample - mix) / se));
  }
  return o;
}

Outcome end_to_end() {
  Outcome o;
  {
    SynthSpec spec;
    spec.num_words = 60;
    spec.separation = 6.0;
    spec.seed = 1;
    RunConfig cfg = quick_config(ModelKind::protonet, spec);
    cfg.dim = 32;
    cfg.learning_rate = 1e-3;
    cfg.episodes = 2000;
    const CorpusSplits data = load_data(cfg.data);
    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint ck = meta_train(cfg, data, 1);
    const EvalReport r = evaluate({ck}, meta_test_episodes(cfg, data.meta_test).episodes);
    const double secs = seconds_since(t0);
    o.require(r.mean >= 0.90, fmt("high separation (6.0, sigma 0.5): protonet meta-test macro F1 %.4f over %zu "
                                  "episodes after %zu training episodes (need >= 0.90)",
                                  r.mean, r.num_episodes(), cfg.episodes));
    o.require(secs <= 600.0, fmt("train + eval time %.1f s (limit 600 s)", secs));
  }
  {
    SynthSpec spec;
    spec.num_words = 40;
    spec.separation = 0.0;
    spec.seed = 2;
    const CorpusSplits data = load_data(quick_config(ModelKind::protonet, spec).data);
    for (ModelKind kind : {ModelKind::majority, ModelKind::nearest_neighbor, ModelKind::ef_protonet,
                           ModelKind::protonet, ModelKind::vpn, ModelKind::vsm, ModelKind::beta_vsm}) {
      RunConfig cfg = quick_config(kind, spec);
      cfg.dim = 16;
      cfg.L_z = 5;
      cfg.L_m = 5;
      cfg.learning_rate = 1e-3;
      cfg.batch_size = 4;
      cfg.episodes = 200;
      cfg.validation_every = 100;
      cfg.ef_steps = 5;
      const Checkpoint ck = meta_train(cfg, data, 1);
      const EvalReport r = evaluate({ck}, meta_test_episodes(cfg, data.meta_test).episodes);
      const ChanceBand band = permutation_chance_band(r.seeds.front(), 1000, 7, 0.99);
      o.require(band.contains_observed(), fmt("separation 0: %-16s macro F1 %.4f, 99%% permutation band [%.4f, %.4f]",
                                              to_string(kind).c_str(), band.observed, band.lower, band.upper));
    }
  }
  return o;
}

SynthSpec trend_spec() {
  SynthSpec s;
  s.num_words = 80;
  s.senses_min = 6;
  s.senses_max = 6;
  s.archetypes = 24;
  s.separation = 2.0;
  s.sigma = 0.8;
  s.seed = 3;
  return s;
}

Outcome trend_check() {
  Outcome o;
  RunConfig base = quick_config(ModelKind::protonet, trend_spec());
  base.support_size = 8;
  base.dim = 32;
  base.learning_rate = 1e-2;
  base.batch_size = 4;
  base.episodes = 2000;
  base.validation_every = 250;
  base.L_z = 10;
  base.L_m = 10;
  base.seeds = {1, 2, 3, 4, 5};
  const CorpusSplits data = load_data(base.data);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows =
      ablate(base, {ModelKind::protonet, ModelKind::vpn, ModelKind::vsm, ModelKind::beta_vsm}, data);
  o.note(fmt("6 senses/word, |S| = 8, separation 2, sigma 0.8, 24 archetypes; %zu episodes per run; %.0f s",
             base.episodes, seconds_since(t0)));
  for (const AblationRow& r : rows) {
    std::string per;
    for (double m : r.seed_means) per += fmt(" %.4f", m);
    o.note(fmt("%-9s mean %.4f +- %.4f  seeds:%s", to_string(r.model).c_str(), r.mean, r.std, per.c_str()));
  }
  for (std::size_t i = rows.size() - 1; i > 0; --i) {
    const AblationRow& hi = rows[i];
    const AblationRow& lo = rows[i - 1];
    const double gap = hi.mean - lo.mean;
    o.require(gap >= -0.01, fmt("%s >= %s - 0.01: difference %+.4f%s", to_string(hi.model).c_str(),
                                to_string(lo.model).c_str(), gap, gap >= -0.01 ? "" : "  VIOLATION"));
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  const SynthSpec spec = ladder_spec();
  const CorpusSplits data = load_data(quick_config(ModelKind::beta_vsm, spec).data);
  for (ModelKind kind : {ModelKind::protonet, ModelKind::vpn, ModelKind::vsm, ModelKind::beta_vsm}) {
    RunConfig cfg = quick_config(kind, spec);
    cfg.dim = 6;
    cfg.support_size = 4;
    cfg.L_z = 3;
    cfg.L_m = 3;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 4;
    cfg.episodes = 80;
    cfg.validation_every = 40;
    const auto eps = meta_test_episodes(cfg, data.meta_test).episodes;
    const Checkpoint a = meta_train(cfg, data, 9);
    const Checkpoint b = meta_train(cfg, data, 9);
    const bool same_report = evaluate({a}, eps) == evaluate({b}, eps);

    Checkpoint part = init_checkpoint(cfg, data, 9);
    TrainHooks stop;
    stop.stop_after = 40;
    continue_training(part, data, stop);
    const fs::path path = fs::temp_directory_path() / ("vsm_acceptance_" + to_string(kind) + ".ckpt");
    save_checkpoint(part, path);
    Checkpoint resumed = load_checkpoint(path);
    continue_training(resumed, data);
    const fs::path again = fs::temp_directory_path() / ("vsm_acceptance_" + to_string(kind) + "_2.ckpt");
    save_checkpoint(load_checkpoint(path), again);
    std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    const bool same_trace = resumed.loss_trace == a.loss_trace;
    const bool same_bytes = s1.str() == s2.str();
    o.require(same_report && same_trace && same_bytes,
              fmt("%-9s identical EvalReports %s, resumed loss trace %s, save-load-save bytes %s",
                  to_string(kind).c_str(), same_report ? "yes" : "no", same_trace ? "identical" : "differs",
                  same_bytes ? "identical" : "differ"));
  }
  return o;
}

Outcome macro_f1_reference() {
  Outcome o;
  double worst = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const NoiseKey key = NoiseKey(77).with(t);
    const std::size_t K = 2 + key.bits(0) % 6, n = 1 + key.bits(1) % 40;
    std::vector<std::size_t> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = key.bits(10 + 2 * i) % K;
      y[i] = key.bits(11 + 2 * i) % K;
    }
    double total = 0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < K; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == c && y[i] == c;
        fp += p[i] == c && y[i] != c;
        fn += p[i] != c && y[i] == c;
      }
      if (tp + fn == 0) continue;
      ++classes;
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0, rec = tp / (tp + fn);
      total += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
    }
    worst = std::max(worst, std::abs(macro_f1(p, y, K) - total / static_cast<double>(classes)));
  }
  o.require(worst <= 1e-12, fmt("100 random prediction vectors, max |diff| %.2e", worst));
  const double hand = macro_f1({0, 0, 0, 0}, {0, 0, 1, 1}, 2);
  o.require(std::abs(hand - 1.0 / 3.0) <= 1e-15, fmt("golds (0,0,1,1), all predicted 0: %.17g", hand));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"closed-form KL", closed_form_kl},
      {"reduction ladder", reduction_ladder},
      {"memory invariants", memory_invariants},
      {"mixture sampling", mixture_sampling},
      {"end-to-end synthetic sanity", end_to_end},
      {"synthetic trend check", trend_check},
      {"determinism and persistence", determinism},
      {"macro F1 reference", macro_f1_reference},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    std::printf("%s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0));
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
