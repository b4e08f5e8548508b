// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/encoders.hpp"

#include "vsm/errors.hpp"

namespace vsm {
namespace {

// Gate layout inside the stacked 3h rows: reset, update, candidate.
Var gru_step(Var xw, Var h, Var U, Var bh, std::size_t hidden) {
  Var hw = add(matvec(U, h), bh);
  Var r = activation(Activation::sigmoid, add(slice(xw, 0, hidden), slice(hw, 0, hidden)));
  Var z = activation(Activation::sigmoid, add(slice(xw, hidden, hidden), slice(hw, hidden, hidden)));
  Var n = activation(Activation::tanh, add(slice(xw, 2 * hidden, hidden), mul(r, slice(hw, 2 * hidden, hidden))));
  // (1 - z) * n + z * h
  return add(n, mul(z, sub(h, n)));
}

Var run_direction(Graph& g, EncoderParams& p, const std::string& dir, Var X, std::size_t from,
                  std::size_t to) {
  const std::size_t hidden = p.output_dim / 2;
  Var W = g.param(p.store.at("enc.gru." + dir + ".Wx"));
  Var bx = g.param(p.store.at("enc.gru." + dir + ".bx"));
  Var U = g.param(p.store.at("enc.gru." + dir + ".Uh"));
  Var bh = g.param(p.store.at("enc.gru." + dir + ".bh"));
  Var XW = add_row_broadcast(matmul(X, transpose(W)), bx);
  Var h = g.constant(Tensor(Shape{hidden}));
  const std::ptrdiff_t step = from <= to ? 1 : -1;
  for (std::ptrdiff_t t = static_cast<std::ptrdiff_t>(from);; t += step) {
    h = gru_step(row(XW, static_cast<std::size_t>(t)), h, U, bh, hidden);
    if (t == static_cast<std::ptrdiff_t>(to)) break;
  }
  return h;
}

}  // namespace

EncoderArch parse_encoder_arch(const std::string& name) {
  if (name == "bigru_linear") return EncoderArch::bigru_linear;
  if (name == "mlp") return EncoderArch::mlp;
  if (name == "linear") return EncoderArch::linear;
  throw ConfigError("unknown encoder arch '" + name + "'");
}

std::string to_string(EncoderArch a) {
  switch (a) {
    case EncoderArch::bigru_linear: return "bigru_linear";
    case EncoderArch::mlp: return "mlp";
    case EncoderArch::linear: return "linear";
  }
  return "?";
}

void EncoderParams::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("encoder dims must be positive");
  if (arch == EncoderArch::bigru_linear && output_dim % 2 != 0) {
    throw ConfigError("bigru_linear needs an even output dim");
  }
  if (!store.all_finite()) throw EvaluationError("encoder weights are not finite");
}

EncoderParams init_encoder(EncoderArch arch, std::size_t input_dim, std::size_t output_dim,
                           std::uint64_t seed) {
  Activation act = Activation::identity;
  if (arch == EncoderArch::bigru_linear) act = Activation::tanh;
  if (arch == EncoderArch::mlp) act = Activation::relu;
  return init_encoder(arch, input_dim, output_dim, act, seed);
}

EncoderParams init_encoder(EncoderArch arch, std::size_t input_dim, std::size_t output_dim,
                           Activation act, std::uint64_t seed) {
  EncoderParams p;
  p.arch = arch;
  p.input_dim = input_dim;
  p.output_dim = output_dim;
  p.act = act;
  p.validate();
  switch (arch) {
    case EncoderArch::linear:
      Dense::create(p.store, seed, "enc.out", input_dim, output_dim, act);
      break;
    case EncoderArch::mlp:
      Dense::create(p.store, seed, "enc.hidden", input_dim, output_dim, act);
      Dense::create(p.store, seed, "enc.out", output_dim, output_dim, act);
      break;
    case EncoderArch::bigru_linear: {
      const std::size_t h = output_dim / 2;
      for (const std::string dir : {"fwd", "bwd"}) {
        const std::string base = "enc.gru." + dir;
        p.store.add(base + ".Wx", glorot_uniform(seed, base + ".Wx", 3 * h, input_dim));
        p.store.add(base + ".bx", Tensor(Shape{3 * h}));
        p.store.add(base + ".Uh", glorot_uniform(seed, base + ".Uh", 3 * h, h));
        p.store.add(base + ".bh", Tensor(Shape{3 * h}));
      }
      Dense::create(p.store, seed, "enc.out", output_dim, output_dim, act);
      break;
    }
  }
  return p;
}

Var encode(Graph& g, EncoderParams& p, const SentenceRecord& rec) {
  if (rec.dim() != p.input_dim) {
    throw ArgumentError("sentence " + rec.sentence_id + " has embedding dim " + std::to_string(rec.dim()) +
                        ", encoder expects " + std::to_string(p.input_dim));
  }
  if (rec.target_index >= rec.length()) {
    throw ArgumentError("sentence " + rec.sentence_id + ": target index out of range");
  }
  switch (p.arch) {
    case EncoderArch::linear:
      return Dense::bind(p.store, "enc.out", p.act)(g, g.constant(rec.target_embedding()));
    case EncoderArch::mlp: {
      Var h = Dense::bind(p.store, "enc.hidden", p.act)(g, g.constant(rec.target_embedding()));
      return Dense::bind(p.store, "enc.out", p.act)(g, h);
    }
    case EncoderArch::bigru_linear: {
      Var X = g.constant(rec.embeddings);
      const std::size_t last = rec.length() - 1;
      Var hf = run_direction(g, p, "fwd", X, 0, rec.target_index);
      Var hb = run_direction(g, p, "bwd", X, last, rec.target_index);
      return Dense::bind(p.store, "enc.out", p.act)(g, concat({hf, hb}));
    }
  }
  throw UnsupportedError("encoder arch");
}

Tensor encode(EncoderParams& params, const SentenceRecord& rec) {
  Graph g;
  return encode(g, params, rec).value();
}

Var mean_support_representation(const std::vector<Var>& reps) {
  if (reps.empty()) throw ArgumentError("mean_support_representation: empty class group");
  return mean_of(reps);
}

Tensor mean_support_representation(const std::vector<Tensor>& reps) {
  if (reps.empty()) throw ArgumentError("mean_support_representation: empty class group");
  Tensor out(reps.front().shape());
  for (const auto& r : reps) {
    if (r.shape() != out.shape()) throw DimensionError("mean_support_representation: mixed shapes");
    for (std::size_t i = 0; i < r.size(); ++i) out[i] += r[i];
  }
  for (double& v : out.span()) v /= static_cast<double>(reps.size());
  return out;
}

}  // namespace vsm
