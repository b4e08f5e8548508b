// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "vsm/errors.hpp"
#include "vsm/gradcheck.hpp"
#include "vsm/protonet.hpp"
#include "vsm/vsm.hpp"

using namespace vsm;
using vsm::testing::ClusterEpisode;

namespace {

MemoryStore two_slot_memory(const Tensor& a, const Tensor& b) {
  SenseInventory inv{{"w", {"w.a", "w.b"}}};
  MemoryStore m = MemoryStore::for_inventory(inv, a.size());
  m.set_row(0, a);
  m.set_row(1, b);
  return m;
}

void zero_weights_keep_biases(ParamStore& store, const std::string& prefix) {
  for (Param* p : store.all()) {
    if (p->name.rfind(prefix, 0) == 0 && p->value.shape().size() == 2) p->value.fill(0.0);
  }
}

SenseInventory fixture_inventory(const ClusterEpisode& fx) {
  SenseInventory inv;
  for (const auto& c : fx.episode.classes) inv["w"].push_back(c);
  inv["other"] = {"other.s0", "other.s1"};
  return inv;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("memory store addressing") {
  SenseInventory inv{{"b", {"b.2", "b.1"}}, {"a", {"a.1"}}};
  MemoryStore m = MemoryStore::for_inventory(inv, 3);
  CHECK(m.size() == 3);
  CHECK(m.senses() == std::vector<std::string>{"a.1", "b.1", "b.2"});
  CHECK(m.slot_of("b.1") == 1);
  CHECK(m.slot_of("b.1") == m.slot_of("b.1"));
  CHECK(m.num_occupied() == 0);
  CHECK_THROWS_AS(m.slot_of("c.1"), AddressingError);
  m.set_row(2, Tensor::vector({0.1, 0.2, 0.3}));
  CHECK(m.occupied_rows() == std::vector<std::size_t>{2});
  CHECK(MemoryStore::from_parts(m.senses(), m.slots(), m.occupied()) == m);
  CHECK_THROWS_AS(MemoryStore::from_parts({"x"}, Tensor::matrix(1, 2, {3.0, 0.0}), {true}), FormatError);
}

TEST_CASE("recall attention") {
  const MemoryStore m = two_slot_memory(Tensor::vector({1, 0}), Tensor::vector({0, 1}));
  const Tensor gamma = *recall_attention(m, Tensor::vector({1, 0}));
  // softmax(1, 0)
  CHECK(gamma[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(gamma[1] == doctest::Approx(0.2689414213699951).epsilon(1e-15));
  CHECK(std::abs(gamma[0] - 0.73106) < 1e-5);

  const MemoryStore same = two_slot_memory(Tensor::vector({0.3, 0.4}), Tensor::vector({0.3, 0.4}));
  const Tensor u = *recall_attention(same, Tensor::vector({5, -2}));
  CHECK(u[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.5).epsilon(1e-15));

  SenseInventory inv{{"w", {"w.a", "w.b", "w.c"}}};
  MemoryStore partial = MemoryStore::for_inventory(inv, 2);
  CHECK_FALSE(recall_attention(partial, Tensor::vector({1, 1})).has_value());
  partial.set_row(0, Tensor::vector({0.5, 0.5}));
  partial.set_row(2, Tensor::vector({-0.5, 0.1}));
  const Tensor masked = *recall_attention(partial, Tensor::vector({1, 2}));
  CHECK(masked[1] == 0.0);
  CHECK(masked[0] + masked[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(recall_attention(partial, Tensor::vector({1, 2, 3})), DimensionError);

  SUBCASE("row-wise log attention over occupied rows agrees") {
    Graph g;
    Var lg = recall_log_attention(gather_rows(g.constant(partial.slots()), partial.occupied_rows()),
                                  g.constant(Tensor::matrix(1, 2, {1, 2})));
    CHECK(std::abs(std::exp(lg.value().at(0, 0)) - masked[0]) < 1e-15);
    CHECK(std::abs(std::exp(lg.value().at(0, 1)) - masked[2]) < 1e-15);
  }
  SUBCASE("gamma is a distribution for random inputs") {
    for (std::uint64_t t = 0; t < 200; ++t) {
      MemoryStore r = MemoryStore::for_inventory({{"w", {"a", "b", "c", "d"}}}, 3);
      for (std::size_t i = 0; i < 4; ++i) {
        if ((t >> i) & 1) {
          Tensor row = NoiseKey(t).with(i).normals({3});
          const double n = l2_norm(row.span());
          for (double& v : row.span()) v /= std::max(1.0, n);
          r.set_row(i, row);
        }
      }
      const auto gm = recall_attention(r, NoiseKey(t).with(9).normals({3}));
      CHECK(gm.has_value() == (r.num_occupied() > 0));
      if (!gm) continue;
      double s = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK((*gm)[i] >= 0.0);
        if (!r.occupied()[i]) CHECK((*gm)[i] == 0.0);
        s += (*gm)[i];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("memory posterior sampling") {
  MemoryNets nets = init_memory_nets(2, 3);
  const NoiseKey key(5);

  SUBCASE("a single component samples mu + sigma * eps") {
    Graph g;
    Var slots = g.constant(Tensor::matrix(1, 2, {0.3, -0.2}));
    const MemoryPosterior post = memory_posterior(g, nets, slots, g.constant(Tensor::matrix(1, 1, {0.0})), 3, key);
    const GaussianDiag comp = post.components.value();
    for (std::size_t l = 0; l < 3; ++l) {
      const Tensor eps = key.with(NoiseStream::memory_m).with({0, l}).normals({2});
      const Tensor expected = sample_gaussian(GaussianDiag{comp.mean.row(0), comp.log_var.row(0)}, eps);
      CHECK(max_abs_diff(post.samples[l].value().row(0), expected) < 1e-15);
    }
  }
  SUBCASE("a zero-weight component is never drawn") {
    Graph g;
    Var slots = g.constant(Tensor::matrix(2, 2, {0.3, -0.2, 0.5, 0.5}));
    Var lg = g.constant(Tensor::matrix(1, 2, {0.0, -INFINITY}));
    const MemoryPosterior post = memory_posterior(g, nets, slots, lg, 2000, key);
    for (const auto& ch : post.chosen) CHECK(ch[0] == 0);
  }
  SUBCASE("the sample mean matches sum_a gamma_a mu_a") {
    Graph g;
    Var slots = g.constant(Tensor::matrix(3, 2, {0.9, 0.0, -0.5, 0.5, 0.0, -0.8}));
    const Tensor gamma = Tensor::vector({0.2, 0.5, 0.3});
    Tensor lg(Shape{1, 3});
    for (std::size_t a = 0; a < 3; ++a) lg.at(0, a) = std::log(gamma[a]);
    const std::size_t L = 100000;
    const MemoryPosterior post = memory_posterior(g, nets, slots, g.constant(lg), L, key);
    const GaussianDiag comp = post.components.value();
    std::vector<double> counts(3, 0.0);
    for (const auto& ch : post.chosen) counts[ch[0]] += 1.0;
    for (std::size_t j = 0; j < 2; ++j) {
      double mix_mean = 0, second = 0, sample_mean = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double mu = comp.mean.at(a, j), var = std::exp(comp.log_var.at(a, j));
        mix_mean += gamma[a] * mu;
        second += gamma[a] * (var + mu * mu);
      }
      for (const auto& s : post.samples) sample_mean += s.value().at(0, j) / static_cast<double>(L);
      const double se = std::sqrt((second - mix_mean * mix_mean) / static_cast<double>(L));
      CHECK(std::abs(sample_mean - mix_mean) <= 3.0 * se);
    }
    for (std::size_t a = 0; a < 3; ++a) {
      const double se = std::sqrt(gamma[a] * (1 - gamma[a]) / static_cast<double>(L));
      CHECK(std::abs(counts[a] / static_cast<double>(L) - gamma[a]) <= 3.0 * se);
    }
  }
}

TEST_CASE("mixture log density against a direct sum") {
  Graph g;
  const Tensor means = NoiseKey(1).normals({3, 2}), lvs = NoiseKey(2).normals({3, 2});
  const Tensor gamma = Tensor::vector({0.1, 0.6, 0.3});
  Tensor lg(Shape{3});
  for (std::size_t a = 0; a < 3; ++a) lg[a] = std::log(gamma[a]);
  const Tensor m = Tensor::vector({0.4, -1.1});
  const double got = mixture_log_density(g.constant(m), {g.constant(means), g.constant(lvs)}, g.constant(lg)).item();
  double dens = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    double p = 1;
    for (std::size_t j = 0; j < 2; ++j) {
      const double var = std::exp(lvs.at(a, j));
      p *= std::exp(-0.5 * std::pow(m[j] - means.at(a, j), 2) / var) / std::sqrt(2 * M_PI * var);
    }
    dens += gamma[a] * p;
  }
  CHECK(got == doctest::Approx(std::log(dens)).epsilon(1e-12));
}

TEST_CASE("row-wise mixture log density") {
  Param X("x", NoiseKey(5).normals({4, 3})), mu("mu", NoiseKey(6).normals({5, 3}));
  Param lv("lv", NoiseKey(7).normals({5, 3})), lg("lg", NoiseKey(8).normals({5}));
  SUBCASE("each row matches the single-sample form") {
    Graph g;
    const GaussianVar comps{g.constant(mu.value), g.constant(lv.value)};
    const Tensor rows = mixture_log_density_rows(g.constant(X.value), comps, g.constant(lg.value)).value();
    REQUIRE(rows.size() == 4);
    for (std::size_t l = 0; l < 4; ++l) {
      const double one = mixture_log_density(g.constant(X.value.row(l)), comps, g.constant(lg.value)).item();
      CHECK(rows[l] == doctest::Approx(one).epsilon(1e-13));
    }
  }
  SUBCASE("gradients match finite differences") {
    const Tensor w = NoiseKey(9).normals({4});
    const auto report = grad_check(
        [&](Graph& g) {
          Var out = mixture_log_density_rows(g.param(X), {g.param(mu), g.param(lv)}, g.param(lg));
          return sum(mul(out, g.constant(w)));
        },
        {&X, &mu, &lv, &lg});
    CHECK_MESSAGE(report.passed, report.summary());
  }
  SUBCASE("shape errors") {
    Graph g;
    CHECK_THROWS_AS(mixture_log_density_rows(g.constant(Tensor(Shape{4, 2})), {g.constant(mu.value), g.constant(lv.value)},
                                             g.constant(lg.value)),
                    DimensionError);
  }
}

TEST_CASE("memory prior network") {
  MemoryNets nets = init_memory_nets(3, 4);
  SUBCASE("zero weights give the input plus the mean bias") {
    for (Param* p : nets.store.all()) {
      if (p->name.rfind("m.prior", 0) == 0) {
        if (p->value.shape().size() == 2) p->value.fill(0.0);
        else p->value = NoiseKey(1).with(hash_string(p->name)).normals(p->value.shape());
      }
    }
    Graph g;
    const Tensor x = NoiseKey(2).normals({3});
    const GaussianDiag pr = memory_prior(g, nets, g.constant(x)).value();
    Tensor expected = nets.store.at("m.prior.mean.b").value;
    for (std::size_t j = 0; j < 3; ++j) expected[j] += x[j];
    CHECK(pr.mean == expected);
    CHECK(pr.log_var == nets.store.at("m.prior.logvar.b").value);
  }
  SUBCASE("finite outputs") {
    for (std::uint64_t t = 0; t < 1000; ++t) {
      Graph g;
      const GaussianDiag pr = memory_prior(g, nets, g.constant(NoiseKey(t).normals({3}))).value();
      CHECK(pr.mean.all_finite());
      CHECK(pr.log_var.all_finite());
    }
    Graph g;
    CHECK_THROWS_AS(memory_prior(g, nets, g.constant(Tensor(Shape{4}))), DimensionError);
  }
  SUBCASE("gradients match finite differences") {
    const Tensor x = NoiseKey(3).normals({2, 3}), w = NoiseKey(4).normals({2, 3});
    const auto report = grad_check(
        [&](Graph& g) {
          const GaussianVar pr = memory_prior(g, nets, g.constant(x));
          return sum(mul(add(pr.mean, exp(pr.log_var)), g.constant(w)));
        },
        nets.store.all());
    CHECK_MESSAGE(report.passed, report.summary());
  }
}

TEST_CASE("posterior over z given memory samples") {
  InferenceNets nets = init_inference_nets(3, 3, 2);
  Graph g;
  Var pooled = g.constant(NoiseKey(1).normals({2, 3}));
  Var m = g.constant(NoiseKey(2).normals({2, 3}));
  const auto one = posterior_z_given_memory(g, nets, pooled, {m});
  REQUIRE(one.size() == 1);
  const GaussianDiag direct = infer_posterior_z(g, nets, pooled, m).value();
  CHECK(one[0].value().mean == direct.mean);
  CHECK(one[0].value().log_var == direct.log_var);
  const auto two = posterior_z_given_memory(g, nets, pooled, {m, m});
  CHECK(two[0].value().mean == two[1].value().mean);
  CHECK(two[0].value().log_var == two[1].value().log_var);
  CHECK_THROWS_AS(posterior_z_given_memory(g, nets, pooled, {}), ArgumentError);
}

TEST_CASE("likelihood averaging over (L_m x L_z) matches a flattened loop") {
  Graph g;
  const std::size_t K = 3, d = 4, Lm = 4, Lz = 5;
  std::vector<GaussianVar> posts;
  for (std::size_t l = 0; l < Lm; ++l) {
    posts.push_back({g.constant(NoiseKey(l).normals({K, d})), g.constant(NoiseKey(l + 50).normals({K, d}))});
  }
  const Tensor X = NoiseKey(99).normals({6, d});
  const std::vector<std::size_t> y = {0, 1, 2, 2, 1, 0};
  const NoiseBank eps = draw_prototype_noise(NoiseKey(7), Lz, K, d);
  VsmHyper hyper;
  hyper.lambda_z = 0;
  hyper.lambda_m = 0;
  const double got = vsm_objective(posts, g.constant(X), y, std::nullopt, std::nullopt, hyper, eps).item();

  long double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t lm = 0; lm < Lm; ++lm) {
      const Tensor& mu = posts[lm].mean.value();
      const Tensor& lv = posts[lm].log_var.value();
      for (std::size_t lz = 0; lz < Lz; ++lz) {
        std::vector<long double> logits(K);
        for (std::size_t k = 0; k < K; ++k) {
          long double s = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const long double z = mu.at(k, j) + std::exp(0.5L * lv.at(k, j)) * eps[lz].at(k, j);
            s += (X.at(i, j) - z) * (X.at(i, j) - z);
          }
          logits[k] = -s;
        }
        long double mx = logits[0];
        for (auto v : logits) mx = std::max(mx, v);
        long double se = 0;
        for (auto v : logits) se += std::exp(v - mx);
        total += (mx + std::log(se) - logits[y[i]]) / static_cast<long double>(Lm * Lz);
      }
    }
  }
  CHECK(std::abs(got - static_cast<double>(total)) < 1e-12);
}

TEST_CASE("VSM reduces to VPN when lambda_m is 0 and memory is bypassed") {
  ClusterEpisode fx(3, 3, 4, 1.0, 21);
  EncoderParams enc = init_encoder(EncoderArch::mlp, 4, 4, 2);
  InferenceNets vpn_nets = init_inference_nets(4, 0, 3);
  VsmNets nets = init_vsm_nets(4, 9);
  nets.z.store.assign(vpn_nets.store);
  nets.z.store.at("z.post.l1.Wside").value.fill(0.0);

  MemoryStore memory = MemoryStore::for_inventory(fixture_inventory(fx), 4);
  memory.set_row(memory.slot_of("other.s0"), Tensor::vector({0.5, 0.1, -0.2, 0.3}));
  const NoiseKey key(44);
  for (bool lookahead : {false, true}) {
    for (std::size_t Lm : {1u, 3u}) {
      VsmHyper hv{0.7, 0.0, 6, Lm, lookahead};
      Graph g1, g2;
      const double vsm = vsm_loss(g1, enc, nets, memory, fx.episode, hv, BetaConfig{}, key).item();
      const double vpn = vpn_loss(g2, enc, vpn_nets, fx.episode, VpnHyper{0.7, 6}, key).item();
      CHECK(std::abs(vsm - static_cast<double>(fx.episode.query.size()) * vpn) < 1e-9);
    }
  }
}

TEST_CASE("memory KL vanishes when the mixture equals the prior") {
  MemoryNets nets = init_memory_nets(3, 1);
  zero_weights_keep_biases(nets.store, "m.");
  for (const std::string head : {"mean", "logvar"}) {
    const Tensor b = NoiseKey(hash_string(head)).normals({3});
    nets.store.at("m.post." + head + ".b").value = b;
    nets.store.at("m.prior." + head + ".b").value = b;
  }
  for (std::size_t L : {10u, 100u, 1000u}) {
    Graph g;
    // Both slots hold the pooled feature, so every component equals the prior.
    Var slots = g.constant(Tensor::matrix(2, 3, {0.5, -0.5, 0.6, 0.5, -0.5, 0.6}));
    Var pooled = g.constant(Tensor::matrix(1, 3, {0.5, -0.5, 0.6}));
    const MemoryPosterior post = memory_posterior(g, nets, slots, recall_log_attention(slots, pooled), L, NoiseKey(L));
    const double kl = memory_kl_estimate(post, memory_prior(g, nets, pooled)).value()[0];
    CHECK(std::abs(kl) < 1e-12);
  }
}

TEST_CASE("memory KL estimate is nonnegative in expectation") {
  std::vector<double> estimates;
  for (std::uint64_t t = 0; t < 100; ++t) {
    MemoryNets nets = init_memory_nets(3, t + 1);
    Graph g;
    Tensor s = NoiseKey(t).with(1).normals({3, 3});
    for (std::size_t r = 0; r < 3; ++r) {
      double n = 0;
      for (std::size_t j = 0; j < 3; ++j) n += s.at(r, j) * s.at(r, j);
      for (std::size_t j = 0; j < 3; ++j) s.at(r, j) /= std::max(1.0, std::sqrt(n));
    }
    Var slots = g.constant(s);
    Var pooled = g.constant(NoiseKey(t).with(2).normals({1, 3}));
    const MemoryPosterior post = memory_posterior(g, nets, slots, recall_log_attention(slots, pooled), 50, NoiseKey(t));
    estimates.push_back(memory_kl_estimate(post, memory_prior(g, nets, pooled)).value()[0]);
  }
  CHECK(mean_of(estimates) >= -3.0 * stderr_of(estimates));
}

TEST_CASE("VSM loss gradient matches finite differences on a tiny instance") {
  ClusterEpisode fx(2, 2, 4, 1.0, 5);
  EncoderParams enc = init_encoder(EncoderArch::mlp, 4, 4, Activation::tanh, 3);
  VsmNets nets = init_vsm_nets(4, 4);
  MemoryStore memory = MemoryStore::for_inventory(fixture_inventory(fx), 4);
  memory.set_row(memory.slot_of("w.s0"), Tensor::vector({0.2, -0.1, 0.4, 0.1}));
  memory.set_row(memory.slot_of("other.s1"), Tensor::vector({-0.3, 0.3, 0.0, 0.6}));
  std::vector<Param*> params = enc.store.all();
  for (Param* p : nets.params()) params.push_back(p);
  for (bool lookahead : {false, true}) {
    CAPTURE(lookahead);
    const VsmHyper hyper{0.5, 0.5, 2, 2, lookahead};
    const auto report = grad_check(
        [&](Graph& g) { return vsm_loss(g, enc, nets, memory, fx.episode, hyper, BetaConfig{}, NoiseKey(8)); }, params);
    CHECK_MESSAGE(report.passed, report.summary());
  }
}

TEST_CASE("graph attention aggregate") {
  MemoryNets nets = init_memory_nets(3, 2);
  SUBCASE("equal nodes with identity value map return that node") {
    Graph g;
    const Tensor v = Tensor::vector({0.2, -0.7, 0.4});
    const UpdateCandidate c = graph_attention_aggregate(g, nets, g.constant(v), {g.constant(v), g.constant(v)});
    CHECK(max_abs_diff(c.mbar.value(), v) < 1e-15);
  }
  SUBCASE("alpha is a distribution") {
    for (std::uint64_t t = 0; t < 200; ++t) {
      Graph g;
      std::vector<Var> feats;
      for (std::size_t i = 0; i < 1 + t % 5; ++i) feats.push_back(g.constant(NoiseKey(t).with(i).normals({3})));
      const Tensor a = graph_attention_aggregate(g, nets, g.constant(NoiseKey(t).normals({3})), feats).alpha.value();
      CHECK(a.size() == feats.size() + 1);
      double s = 0;
      for (double x : a.values()) {
        CHECK(x >= 0);
        s += x;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("three nodes against a hand-rolled oracle") {
    MemoryNets n2 = init_memory_nets(2, 1);
    n2.store.at("ga.W").value = Tensor::matrix(2, 2, {0.5, -0.1, 0.2, 0.3});
    n2.store.at("ga.Wv").value = Tensor::matrix(2, 2, {1.0, 0.1, -0.2, 0.8});
    n2.store.at("ga.a").value = Tensor::vector({0.3, -0.4, 0.6, 0.2});
    const double f[3][2] = {{0.5, 0.1}, {1.0, -1.0}, {-2.0, 0.5}};
    Graph g;
    const UpdateCandidate c = graph_attention_aggregate(
        g, n2, g.constant(Tensor::vector({f[0][0], f[0][1]})),
        {g.constant(Tensor::vector({f[1][0], f[1][1]})), g.constant(Tensor::vector({f[2][0], f[2][1]}))});
    const double W[2][2] = {{0.5, -0.1}, {0.2, 0.3}}, Wv[2][2] = {{1.0, 0.1}, {-0.2, 0.8}};
    const double a[4] = {0.3, -0.4, 0.6, 0.2};
    double Wf[3][2], s[3], e[3], z = 0;
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < 2; ++r) Wf[i][r] = W[r][0] * f[i][0] + W[r][1] * f[i][1];
    for (int i = 0; i < 3; ++i) {
      const double raw = a[0] * Wf[0][0] + a[1] * Wf[0][1] + a[2] * Wf[i][0] + a[3] * Wf[i][1];
      s[i] = raw > 0 ? raw : 0.2 * raw;
    }
    for (int i = 0; i < 3; ++i) z += (e[i] = std::exp(s[i]));
    double mbar[2] = {0, 0};
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(c.alpha.value()[i] - e[i] / z) < 1e-12);
      for (int r = 0; r < 2; ++r) mbar[r] += e[i] / z * (Wv[r][0] * f[i][0] + Wv[r][1] * f[i][1]);
    }
    CHECK(std::abs(c.mbar.value()[0] - mbar[0]) < 1e-12);
    CHECK(std::abs(c.mbar.value()[1] - mbar[1]) < 1e-12);
  }
  Graph g;
  CHECK_THROWS_AS(graph_attention_aggregate(g, nets, g.constant(Tensor(Shape{2})), {}), DimensionError);
}

TEST_CASE("adaptive beta") {
  MemoryNets nets = init_memory_nets(2, 5);
  SUBCASE("zero network gives one half") {
    for (Param* p : nets.store.all()) {
      if (p->name.rfind("beta.", 0) == 0) p->value.fill(0.0);
    }
    Graph g;
    CHECK(adaptive_beta(g, nets, g.constant(Tensor::vector({3, -1}))).item() == 0.5);
  }
  SUBCASE("strictly inside (0, 1)") {
    for (std::uint64_t t = 0; t < 10000; ++t) {
      Graph g;
      Tensor x = NoiseKey(t).normals({2});
      for (double& v : x.span()) v *= 3.0;
      const double b = adaptive_beta(g, nets, g.constant(x)).item();
      CHECK(b > 0.0);
      CHECK(b < 1.0);
    }
  }
  SUBCASE("hand-set weights on a 2-d input") {
    nets.store.at("beta.l1.W").value = Tensor::matrix(2, 2, {1.0, -1.0, 0.5, 0.5});
    nets.store.at("beta.l1.b").value = Tensor::vector({0.1, -0.2});
    nets.store.at("beta.l2.W").value = Tensor::matrix(2, 2, {2.0, 0.0, -1.0, 1.0});
    nets.store.at("beta.l2.b").value = Tensor::vector({0.0, 0.3});
    nets.store.at("beta.out.W").value = Tensor::matrix(1, 2, {0.7, -0.4});
    nets.store.at("beta.out.b").value = Tensor::vector({0.05});
    const double x0 = 0.6, x1 = -0.2;
    const double h1a = std::max(0.0, x0 - x1 + 0.1), h1b = std::max(0.0, 0.5 * x0 + 0.5 * x1 - 0.2);
    const double h2a = std::max(0.0, 2.0 * h1a), h2b = std::max(0.0, -h1a + h1b + 0.3);
    const double expected = 1.0 / (1.0 + std::exp(-(0.7 * h2a - 0.4 * h2b + 0.05)));
    Graph g;
    CHECK(adaptive_beta(g, nets, g.constant(Tensor::vector({x0, x1}))).item() == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("saturated logits stay strictly inside (0, 1)") {
    for (Param* p : nets.store.all()) {
      for (double& v : p->value.span()) v *= 100.0;
    }
    for (std::uint64_t t = 0; t < 200; ++t) {
      Graph g;
      Tensor x = NoiseKey(t).normals({2});
      for (double& v : x.span()) v *= 10.0;
      const double b = adaptive_beta(g, nets, g.constant(x)).item();
      CHECK(b > 0.0);
      CHECK(b < 1.0);
    }
  }
  SUBCASE("fixed mode") {
    Graph g;
    CHECK(adaptive_beta(g, nets, g.constant(Tensor::vector({1, 1})), {BetaMode::fixed, 0.3}).item() == 0.3);
    CHECK_THROWS_AS((BetaConfig{BetaMode::fixed, 1.0}.validate()), ConfigError);
  }
}

TEST_CASE("update_memory") {
  SenseInventory inv{{"w", {"w.a", "w.b"}}};
  MemoryStore m = MemoryStore::for_inventory(inv, 2);
  update_memory(m, "w.a", Tensor::vector({0.6, 0.0}), 0.5);
  CHECK(m.row(0) == Tensor::vector({0.6, 0.0}));  // first write takes M_bar
  CHECK(m.occupied()[0]);

  update_memory(m, "w.a", Tensor::vector({0.0, 0.6}), 0.5);
  CHECK(m.row(0)[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(m.row(0)[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(l2_norm(m.row(0).span()) == doctest::Approx(0.42426406871192851).epsilon(1e-14));

  const Tensor before = m.row(0);
  update_memory(m, "w.a", Tensor::vector({0.9, -0.9}), 1.0);
  CHECK(m.row(0) == before);

  update_memory(m, "w.b", Tensor::vector({1.2, 1.6}), 0.5);  // norm 2
  CHECK(l2_norm(m.row(1).span()) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.row(1)[0] == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(update_memory(m, "w.c", Tensor::vector({0, 0}), 0.5), AddressingError);
  CHECK_THROWS_AS(update_memory(m, "w.a", Tensor::vector({0, 0, 0}), 0.5), DimensionError);

  SUBCASE("clipping never leaves a row above unit norm") {
    for (std::uint64_t t = 0; t < 5000; ++t) {
      Tensor v = NoiseKey(t).with(4).normals({2});
      for (double& x : v.span()) x *= 1.0 + 10.0 * NoiseKey(t).uniform(5);
      update_memory(m, "w.b", v, 0.0);
      REQUIRE(l2_norm(m.row(1).span()) <= 1.0);
    }
  }
  SUBCASE("norms stay within 1 over a random update stream") {
    MemoryStore big = MemoryStore::for_inventory({{"w", {"a", "b", "c", "d", "e"}}}, 4);
    for (std::uint64_t t = 0; t < 1000; ++t) {
      const NoiseKey k = NoiseKey(t).with(3);
      Tensor mbar = k.normals({4});
      for (double& v : mbar.span()) v *= 0.1 + 3.0 * k.uniform(99);
      const std::string s = big.senses()[k.bits(1) % 5];
      update_memory(big, s, mbar, k.uniform(7));
      for (std::size_t r = 0; r < big.size(); ++r) CHECK(l2_norm(big.row(r).span()) <= 1.0 + 1e-15);
    }
  }
}

TEST_CASE("fixed beta reproduces the adaptive path bit for bit when f_beta is that constant") {
  ClusterEpisode fx(3, 2, 4, 1.0, 6);
  VsmNets nets = init_vsm_nets(4, 2);
  for (Param* p : nets.memory.store.all()) {
    if (p->name.rfind("beta.", 0) == 0) p->value.fill(0.0);
  }
  nets.memory.store.at("beta.out.b").value = Tensor::vector({0.8});
  Graph g0;
  const double constant = activation(Activation::sigmoid, g0.constant(Tensor::scalar(0.8))).item();
  const BetaConfig fixed{BetaMode::fixed, constant};

  EncoderParams enc = init_encoder(EncoderArch::linear, 4, 4, 1);
  MemoryStore a = MemoryStore::for_inventory(fixture_inventory(fx), 4);
  a.set_row(a.slot_of("w.s1"), Tensor::vector({0.1, 0.2, 0.3, 0.4}));
  MemoryStore b = a;
  const VsmHyper hyper{0.1, 0.1, 3, 2, true};
  Graph g1, g2;
  const VsmForward fa = vsm_forward(g1, enc, nets, a, fx.episode, hyper, BetaConfig{}, NoiseKey(1));
  const VsmForward fb = vsm_forward(g2, enc, nets, b, fx.episode, hyper, fixed, NoiseKey(1));
  CHECK(fa.loss.item() == fb.loss.item());
  const auto ba = commit_episode(a, nets, fx.episode, fa.class_features, BetaConfig{});
  const auto bb = commit_episode(b, nets, fx.episode, fb.class_features, fixed);
  CHECK(ba == bb);
  CHECK(a == b);
}

TEST_CASE("commit writes every episode class") {
  ClusterEpisode fx(3, 2, 4, 1.0, 7);
  VsmNets nets = init_vsm_nets(4, 3);
  EncoderParams enc = init_encoder(EncoderArch::linear, 4, 4, 1);
  MemoryStore m = MemoryStore::for_inventory(fixture_inventory(fx), 4);
  Graph g;
  const VsmHyper hyper{0.1, 0.1, 2, 2, false};
  const VsmForward f = vsm_forward(g, enc, nets, m, fx.episode, hyper, BetaConfig{}, NoiseKey(2));
  CHECK_FALSE(f.recalled);
  CHECK(f.class_features[0].size() == 4);
  const auto betas = commit_episode(m, nets, fx.episode, f.class_features, BetaConfig{});
  CHECK(betas.size() == 3);
  CHECK(m.num_occupied() == 3);
  CHECK_FALSE(m.occupied()[m.slot_of("other.s0")]);
  for (const auto& s : fx.episode.classes) CHECK(l2_norm(m.row(m.slot_of(s)).span()) <= 1.0);

  Graph g2;
  CHECK(vsm_forward(g2, enc, nets, m, fx.episode, hyper, BetaConfig{}, NoiseKey(2)).recalled);
  Graph g3;
  MemoryStore empty = MemoryStore::for_inventory(fixture_inventory(fx), 4);
  CHECK(vsm_forward(g3, enc, nets, empty, fx.episode, VsmHyper{0.1, 0.1, 2, 2, true}, BetaConfig{}, NoiseKey(2)).recalled);
}

TEST_CASE("meta-test memory path") {
  ClusterEpisode fx(2, 3, 4, 1.5, 8);
  VsmNets nets = init_vsm_nets(4, 5);
  EncoderParams enc = init_encoder(EncoderArch::mlp, 4, 4, 6);
  SUBCASE("samples exist without any memory") {
    Graph g;
    const auto s = meta_test_memory_path(g, nets.memory, g.constant(NoiseKey(1).normals({2, 4})), 5, NoiseKey(3));
    CHECK(s.size() == 5);
    for (Var v : s) CHECK(v.value().all_finite());
  }
  SUBCASE("prediction runs end to end on a fresh word") {
    const auto probs = predict_vsm(enc, nets, fx.episode, 4, 3, NoiseKey(4));
    REQUIRE(probs.size() == fx.episode.query.size());
    for (const auto& p : probs) {
      CHECK(p.size() == 2);
      CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto again = predict_vsm(enc, nets, fx.episode, 4, 3, NoiseKey(4));
    for (std::size_t i = 0; i < probs.size(); ++i) CHECK(probs[i] == again[i]);
  }
  SUBCASE("meta-test and meta-train recall agree when g_psi heads coincide on a single slot") {
    for (const std::string part : {".l1.W", ".l1.b", ".l2.W", ".l2.b", ".mean.W", ".mean.b", ".logvar.W", ".logvar.b"}) {
      nets.memory.store.at("m.post" + part).value = nets.memory.store.at("m.prior" + part).value;
    }
    Graph g;
    const Tensor fbar = Tensor::vector({0.3, -0.1, 0.2, 0.5});
    Var pooled = g.constant(Tensor::matrix(1, 4, {0.3, -0.1, 0.2, 0.5}));
    Var slot = g.constant(Tensor::matrix(1, 4, {0.3, -0.1, 0.2, 0.5}));
    const NoiseKey key(12);
    const MemoryPosterior post = memory_posterior(g, nets.memory, slot, recall_log_attention(slot, pooled), 4, key);
    const auto test_path = meta_test_memory_path(g, nets.memory, pooled, 4, key);
    const auto zt = posterior_z_given_memory(g, nets.z, pooled, post.samples);
    const auto ze = posterior_z_given_memory(g, nets.z, pooled, test_path);
    for (std::size_t l = 0; l < 4; ++l) {
      CHECK(zt[l].value().mean == ze[l].value().mean);
      CHECK(zt[l].value().log_var == ze[l].value().log_var);
    }
    (void)fbar;
  }
}
