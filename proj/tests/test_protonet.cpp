// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "vsm/errors.hpp"
#include "vsm/gradcheck.hpp"
#include "vsm/noise.hpp"
#include "vsm/optim.hpp"
#include "vsm/protonet.hpp"

using namespace vsm;

namespace {

SentenceRecord point_record(const std::string& id, const std::string& sense, const Tensor& target,
                            std::size_t len = 1) {
  SentenceRecord r;
  r.sentence_id = id;
  r.word_id = "w";
  r.sense_id = sense;
  r.target_index = 0;
  r.embeddings = Tensor(Shape{len, target.size()});
  for (std::size_t t = 0; t < len; ++t) r.tokens.push_back("t");
  for (std::size_t k = 0; k < target.size(); ++k) r.embeddings.at(0, k) = target[k];
  return r;
}

// Two well-separated clusters in 4-d, n support and n query per class.
struct TwoClassFixture {
  std::vector<SentenceRecord> records;
  Episode episode;

  explicit TwoClassFixture(std::size_t n, double gap = 3.0, std::uint64_t seed = 1) {
    records.reserve(4 * n);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 2 * n; ++i) {
        Tensor x = NoiseKey(seed).with({c, i}).normals({4});
        for (double& v : x.span()) v *= 0.3;
        x[0] += c == 0 ? gap : -gap;
        records.push_back(point_record("c" + std::to_string(c) + "_" + std::to_string(i), "s" + std::to_string(c), x));
      }
    }
    episode.classes = {"s0", "s1"};
    episode.num_support_classes = 2;
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 2 * n; ++i) {
        LabeledRecord lr{&records[c * 2 * n + i], c};
        (i < n ? episode.support : episode.query).push_back(lr);
      }
    }
  }
};

}  // namespace

TEST_CASE("compute_prototypes") {
  CHECK(compute_prototypes({{Tensor::vector({1, 2})}})[0] == Tensor::vector({1, 2}));
  CHECK(compute_prototypes({{Tensor::vector({1, 0}), Tensor::vector({0, 1})}})[0] == Tensor::vector({0.5, 0.5}));
  CHECK_THROWS_AS(compute_prototypes({{Tensor::vector({1, 0})}, {}}), ArgumentError);

  std::vector<std::vector<Tensor>> groups(3);
  for (std::uint64_t i = 0; i < 12; ++i) groups[i % 3].push_back(NoiseKey(i).normals({5}));
  const PrototypeSet p = compute_prototypes(groups);
  for (std::size_t c = 0; c < 3; ++c) CHECK(p[c] == mean_support_representation(groups[c]));
  std::mt19937_64 rng(2);
  for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
  const PrototypeSet q = compute_prototypes(groups);
  for (std::size_t c = 0; c < 3; ++c) CHECK(max_abs_diff(p[c], q[c]) < 1e-15);
}

TEST_CASE("classify") {
  const PrototypeSet two = {Tensor::vector({0, 0}), Tensor::vector({2, 0})};
  const Tensor mid = classify(Tensor::vector({1, 5}), two, Distance::sq_euclidean);
  CHECK(mid[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mid[1] == doctest::Approx(0.5).epsilon(1e-15));

  // softmax(-0, -4), frozen from a direct evaluation 1/(1+e^-4).
  const Tensor p = classify(Tensor::vector({0, 0}), two, Distance::sq_euclidean);
  CHECK(p[0] == doctest::Approx(0.98201379003790845).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.017986209962091559).epsilon(1e-12));
  CHECK(std::abs(p[0] - 0.98201) < 1e-5);

  CHECK_THROWS_AS(classify(Tensor::vector({0, 0, 0}), two, Distance::sq_euclidean), ArgumentError);

  SUBCASE("distributions sum to one and cosine ignores query scale") {
    PrototypeSet protos;
    for (std::uint64_t k = 0; k < 5; ++k) protos.push_back(NoiseKey(k + 10).normals({6}));
    for (std::uint64_t t = 0; t < 100; ++t) {
      const Tensor x = NoiseKey(t + 100).normals({6});
      for (Distance d : {Distance::sq_euclidean, Distance::cosine}) {
        const Tensor pr = classify(x, protos, d);
        double s = 0;
        for (double v : pr.values()) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
      Tensor big = x;
      const double alpha = 0.1 + static_cast<double>(t);
      for (double& v : big.span()) v *= alpha;
      CHECK(max_abs_diff(classify(big, protos, Distance::cosine), classify(x, protos, Distance::cosine)) < 1e-12);
    }
  }
  SUBCASE("adding a constant to every distance leaves the distribution unchanged") {
    // Moving the query along a direction orthogonal to the plane of the
    // prototypes adds the same amount to every squared distance.
    const PrototypeSet protos = {Tensor::vector({1, 0, 0}), Tensor::vector({0, 2, 0}), Tensor::vector({-1, 1, 0})};
    const Tensor a = classify(Tensor::vector({0.2, 0.3, 0}), protos, Distance::sq_euclidean);
    const Tensor b = classify(Tensor::vector({0.2, 0.3, 7}), protos, Distance::sq_euclidean);
    CHECK(max_abs_diff(a, b) < 1e-12);
  }
}

TEST_CASE("majority_sense") {
  CHECK(majority_sense({2, 2, 2}) == 2);
  CHECK(majority_sense({1, 3, 3, 1}) == 1);
  CHECK(majority_sense({0, 0, 0, 1}) == 0);
  CHECK_THROWS_AS(majority_sense({}), ArgumentError);
}

TEST_CASE("nearest_neighbor under cosine distance") {
  const std::vector<Tensor> s = {Tensor::vector({1, 0}), Tensor::vector({0, 1}), Tensor::vector({1, 1})};
  const std::vector<std::size_t> y = {4, 5, 6};
  CHECK(nearest_neighbor(Tensor::vector({0, 1}), s, y) == 5);
  CHECK(nearest_neighbor(Tensor::vector({2, 2}), s, y) == 6);
  // Hand-computed cosines for (3, 1): 0.9487, 0.3162, 0.8944.
  CHECK(nearest_neighbor(Tensor::vector({3, 1}), s, y) == 4);
  // Exact tie between items 0 and 1 goes to the earlier one.
  CHECK(nearest_neighbor(Tensor::vector({1, 1}), {s[0], s[1]}, {4, 5}) == 4);
  CHECK_THROWS_AS(nearest_neighbor(Tensor::vector({0, 0}), s, y), ArgumentError);
  CHECK_THROWS_AS(nearest_neighbor(Tensor::vector({1, 0}), {Tensor::vector({0, 0})}, {0}), ArgumentError);
  CHECK_THROWS_AS(nearest_neighbor(Tensor::vector({1, 0}), {}, {}), ArgumentError);

  SUBCASE("agrees with a brute-force scan") {
    for (std::uint64_t t = 0; t < 200; ++t) {
      std::vector<Tensor> sup;
      std::vector<std::size_t> lab;
      for (std::size_t i = 0; i < 7; ++i) {
        sup.push_back(NoiseKey(t).with(i).normals({5}));
        lab.push_back(i);
      }
      const Tensor q = NoiseKey(t).with(99).normals({5});
      double best = -2;
      std::size_t best_i = 0;
      for (std::size_t i = 0; i < sup.size(); ++i) {
        long double dp = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < 5; ++k) {
          dp += static_cast<long double>(q[k]) * sup[i][k];
          na += static_cast<long double>(q[k]) * q[k];
          nb += static_cast<long double>(sup[i][k]) * sup[i][k];
        }
        const double cos = static_cast<double>(dp / std::sqrt(na * nb));
        if (cos > best) {
          best = cos;
          best_i = i;
        }
      }
      CHECK(nearest_neighbor(q, sup, lab) == best_i);
    }
  }
}

TEST_CASE("protonet_loss") {
  TwoClassFixture fx(3);
  SUBCASE("uniform predictions give ln K") {
    EncoderParams enc = init_encoder(EncoderArch::linear, 4, 4, 1);
    enc.store.at("enc.out.W").value = Tensor(Shape{4, 4});
    Graph g;
    CHECK(protonet_loss(g, enc, fx.episode).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("gradient matches finite differences") {
    for (EncoderArch a : {EncoderArch::linear, EncoderArch::mlp}) {
      EncoderParams enc = init_encoder(a, 4, 3, Activation::tanh, 5);
      for (Distance d : {Distance::sq_euclidean, Distance::cosine}) {
        const auto report = grad_check([&](Graph& g) { return protonet_loss(g, enc, fx.episode, d); }, enc.store.all());
        CHECK_MESSAGE(report.passed, report.summary());
      }
    }
  }
  SUBCASE("training drives a separated episode below ln(2)/10") {
    EncoderParams enc = init_encoder(EncoderArch::mlp, 4, 4, 3);
    Adam adam({0.01});
    double loss = 0;
    for (int step = 0; step < 300; ++step) {
      enc.store.zero_grad();
      Graph g;
      Var l = protonet_loss(g, enc, fx.episode);
      loss = l.item();
      g.backward(l);
      adam.step(enc.store.all());
    }
    CHECK(loss < std::log(2.0) / 10.0);
    for (const auto& p : predict_protonet(enc, fx.episode)) CHECK(p.size() == 2);
  }
}

TEST_CASE("EF-ProtoNet leaves its initial encoder untouched") {
  TwoClassFixture fx(4, 0.5, 7);
  const EncoderParams init = init_encoder(EncoderArch::mlp, 4, 4, 9);
  const EncoderParams copy = init;
  const auto frozen = predict_ef_protonet(init, fx.episode, 0, 0.1);
  const auto adapted = predict_ef_protonet(init, fx.episode, 20, 0.1);
  for (const auto* p : init.store.all()) CHECK(p->value == copy.store.at(p->name).value);
  EncoderParams again = init;
  const auto direct = predict_protonet(again, fx.episode);
  REQUIRE(frozen.size() == direct.size());
  for (std::size_t i = 0; i < frozen.size(); ++i) CHECK(frozen[i] == direct[i]);
  bool changed = false;
  for (std::size_t i = 0; i < adapted.size(); ++i) changed = changed || max_abs_diff(adapted[i], frozen[i]) > 1e-9;
  CHECK(changed);
}

TEST_CASE("distance names") {
  CHECK(parse_distance("cosine") == Distance::cosine);
  CHECK(parse_distance(to_string(Distance::sq_euclidean)) == Distance::sq_euclidean);
  CHECK_THROWS_AS(parse_distance("manhattan"), ConfigError);
}
