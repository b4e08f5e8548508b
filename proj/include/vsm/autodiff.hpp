// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Tape-based reverse-mode differentiation over float64 tensors.
//
// A Graph records every operation as a node in creation order, so creation
// order is a topological order and the reverse pass is a single backwards
// sweep. Gradients accumulate into input nodes, which handles fan-out.
// Parameters live outside the graph (Param) and receive their gradient
// contribution when backward() finishes.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vsm/tensor.hpp"

namespace vsm {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}

  Graph* graph() const { return g_; }
  std::size_t id() const { return id_; }
  bool valid() const { return g_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t size() const;
  double item() const;
  bool requires_grad() const;

 private:
  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf without gradient.
  Var constant(Tensor value);
  // Leaf whose gradient can be read back with grad() after backward().
  Var input(Tensor value);
  // Leaf bound to an external parameter; one node per Param per graph.
  Var param(Param& p);

  // Runs the reverse pass from a single-element root. Parameter gradients
  // are added (not assigned) to Param::grad.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Op implementation interface.
  Var make(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of an input, allocated on first use. Callers must check
  // requires_grad() first.
  Tensor& accum(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Param* sink = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable element addresses
  std::unordered_map<Param*, std::size_t> param_nodes_;
};

enum class Activation { identity, tanh, relu, elu, sigmoid };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

// Elementwise forward helpers shared with non-graph code.
double apply_activation(Activation kind, double x);
double activation_derivative(Activation kind, double x, double y);

// --- arithmetic (rank-0 operands broadcast in add/sub/mul) -----------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var affine(Var a, double s, double shift);  // s * a + shift
Var add_n(const std::vector<Var>& terms);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return scale(a, -1.0); }

// --- linear algebra ---------------------------------------------------------
Var matmul(Var a, Var b);
Var matvec(Var w, Var x);
Var add_row_broadcast(Var m, Var v);
Var transpose(Var m);
Var dot(Var a, Var b);

// --- elementwise -------------------------------------------------------------
Var activation(Activation kind, Var x);
Var leaky_relu(Var x, double slope);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
// Hard clamp; gradient is zero where the input is outside [lo, hi].
Var clamp(Var x, double lo, double hi);

// --- reductions / reshaping --------------------------------------------------
Var sum(Var x);
Var mean(Var x);
Var mean_rows(Var m);
Var mean_of(const std::vector<Var>& vectors);
Var concat(const std::vector<Var>& vectors);
Var slice(Var v, std::size_t begin, std::size_t len);
Var stack_rows(const std::vector<Var>& vectors);
Var row(Var m, std::size_t r);
Var gather_rows(Var m, const std::vector<std::size_t>& rows);
// Copy of `base` with rows[i] replaced by `replacements[i]`.
Var scatter_rows(Var base, const std::vector<std::size_t>& rows,
                 const std::vector<Var>& replacements);
Var reshape(Var x, Shape shape);
Var pick(Var v, std::size_t i);
Var column(Var m, std::size_t c);

// --- normalisers ---------------------------------------------------------------
Var softmax(Var v);
// Entries with mask[i] == false get probability exactly 0.
Var softmax(Var v, const std::vector<bool>& mask);
Var log_softmax(Var v);
Var log_softmax(Var v, const std::vector<bool>& mask);
Var logsumexp(Var v);
Var softmax_rows(Var m);
Var log_softmax_rows(Var m);

// --- distances -----------------------------------------------------------------
Var sq_distance(Var a, Var b);
Var cosine_distance(Var a, Var b);
// ||m_r - x||^2 for every row r.
Var row_sq_distances(Var m, Var x);
// x / max(1, ||x||_2)
Var norm_clip(Var x);

// --- Gaussian primitives ------------------------------------------------------
// Closed-form KL(N(mq, exp(lvq)) || N(mp, exp(lvp))) for diagonal Gaussians.
Var kl_diag_gauss(Var mean_q, Var log_var_q, Var mean_p, Var log_var_p);
// mean + exp(log_var / 2) * eps; eps carries no gradient.
Var sample_gaussian(Var mean, Var log_var, const Tensor& eps);
// Log density of x under a diagonal Gaussian.
Var gaussian_log_density(Var x, Var mean, Var log_var);
// Log density of x under every row of (means, log_vars).
Var gaussian_log_density_rows(Var x, Var means, Var log_vars);

}  // namespace vsm
