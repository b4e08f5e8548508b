// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/suites.hpp"

#include <chrono>

#include "vsm/protonet.hpp"
#include "vsm/vpn.hpp"
#include "vsm/vsm.hpp"

namespace vsm {

namespace {

constexpr std::size_t kDim = 4;

struct Instance {
  std::vector<SentenceRecord> records;
  Episode episode;
  SenseInventory inventory;

  Instance() {
    const std::size_t per_class = 6;
    records.reserve(2 * per_class);
    for (std::size_t c = 0; c < 2; ++c) {
      const Tensor centre = NoiseKey(11).with(c).normals({kDim});
      for (std::size_t i = 0; i < per_class; ++i) {
        SentenceRecord r;
        r.sentence_id = "g.s" + std::to_string(c) + ".e" + std::to_string(i);
        r.word_id = "g";
        r.sense_id = "g.s" + std::to_string(c);
        r.tokens = {"a", "b", "c"};
        r.target_index = 1;
        r.embeddings = NoiseKey(12).with({c, i}).normals({3, kDim});
        for (std::size_t j = 0; j < kDim; ++j) r.embeddings.at(1, j) += centre[j];
        records.push_back(std::move(r));
      }
    }
    episode.classes = {"g.s0", "g.s1"};
    episode.num_support_classes = 2;
    for (std::size_t k = 0; k < records.size(); ++k) {
      const std::size_t c = k / per_class, i = k % per_class;
      (i < 2 ? episode.support : episode.query).push_back({&records[k], c});
    }
    inventory = {{"g", {"g.s0", "g.s1"}}, {"h", {"h.s0", "h.s1"}}};
  }
};

template <typename F>
GradientSuite timed(const std::string& name, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  GradientSuite s;
  s.name = name;
  s.report = fn();
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

}  // namespace

std::vector<GradientSuite> run_gradient_suites(double tolerance) {
  const Instance inst;
  const Episode& ep = inst.episode;
  const NoiseKey key(2024);
  std::vector<GradientSuite> out;

  out.push_back(timed("protonet_loss", [&] {
    EncoderParams enc = init_encoder(EncoderArch::mlp, kDim, kDim, Activation::tanh, 1);
    return grad_check([&](Graph& g) { return protonet_loss(g, enc, ep); }, enc.store.all(), 1e-5, tolerance);
  }));

  out.push_back(timed("vpn_loss", [&] {
    EncoderParams enc = init_encoder(EncoderArch::mlp, kDim, kDim, Activation::tanh, 2);
    InferenceNets nets = init_inference_nets(kDim, 0, 3);
    std::vector<Param*> params = enc.store.all();
    for (Param* p : nets.store.all()) params.push_back(p);
    const VpnHyper hyper{0.5, 2};
    return grad_check([&](Graph& g) { return vpn_loss(g, enc, nets, ep, hyper, key); }, params, 1e-5, tolerance);
  }));

  for (bool lookahead : {true, false}) {
    out.push_back(timed(lookahead ? "vsm_loss" : "vsm_loss_stored_recall", [&] {
      EncoderParams enc = init_encoder(EncoderArch::mlp, kDim, kDim, Activation::tanh, 4);
      VsmNets nets = init_vsm_nets(kDim, 5);
      MemoryStore memory = MemoryStore::for_inventory(inst.inventory, kDim);
      memory.set_row(memory.slot_of("g.s1"), Tensor::vector({0.3, -0.2, 0.1, 0.4}));
      memory.set_row(memory.slot_of("h.s0"), Tensor::vector({-0.5, 0.2, 0.3, -0.1}));
      std::vector<Param*> params = enc.store.all();
      for (Param* p : nets.params()) params.push_back(p);
      const VsmHyper hyper{0.5, 0.5, 2, 2, lookahead};
      return grad_check(
          [&](Graph& g) { return vsm_loss(g, enc, nets, memory, ep, hyper, BetaConfig{}, key); }, params, 1e-5,
          tolerance);
    }));
  }
  return out;
}

}  // namespace vsm
