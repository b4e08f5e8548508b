// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vsm/errors.hpp"

namespace vsm {

const Tensor& Var::value() const { return g_->value(id_); }
const Shape& Var::shape() const { return value().shape(); }
std::size_t Var::size() const { return value().size(); }
double Var::item() const { return value().item(); }
bool Var::requires_grad() const { return g_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, nullptr, &p, true});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::make(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool rg = false;
  for (std::size_t in : inputs) rg = rg || nodes_[in].requires_grad;
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::accum(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.shape() == n.value.shape() && n.grad.size() == n.value.size()) return n.grad;
  return Tensor(n.value.shape());
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw ArgumentError("backward: root belongs to another graph");
  if (nodes_[root.id()].value.size() != 1) {
    throw DimensionError("backward: root must hold a single element");
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id()].requires_grad) return;
  accum(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.sink != nullptr) {
      Tensor& pg = n.sink->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor(n.value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "none") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ArgumentError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

double apply_activation(Activation kind, double x) {
  switch (kind) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 || std::isnan(x) ? x : 0.0;
    case Activation::elu: return x >= 0.0 ? x : std::expm1(x);
    case Activation::sigmoid:
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      else {
        const double e = std::exp(x);
        return e / (1.0 + e);
      }
  }
  return x;
}

double activation_derivative(Activation kind, double x, double y) {
  switch (kind) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::elu: return x >= 0.0 ? 1.0 : y + 1.0;
    case Activation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw ArgumentError("operation on an empty Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() != b.graph()) throw ArgumentError("operands belong to different graphs");
  return graph_of(a);
}

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

// Elementwise binary op with rank-0 broadcasting on either side.
template <class Fwd, class DA, class DB>
Var binary(Var a, Var b, const char* name, Fwd fwd, DA da, DB db) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_sc = is_scalar(av) && !is_scalar(bv);
  const bool b_sc = is_scalar(bv) && !is_scalar(av);
  if (!a_sc && !b_sc) require_same_shape(av, bv, name);
  const Tensor& big = a_sc ? bv : av;
  Tensor out(big.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fwd(av[a_sc ? 0 : i], bv[b_sc ? 0 : i]);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.make(std::move(out), {ia, ib}, [ia, ib, a_sc, b_sc, da, db](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.accum(ia);
      for (std::size_t i = 0; i < up.size(); ++i) {
        ga[a_sc ? 0 : i] += up[i] * da(av[a_sc ? 0 : i], bv[b_sc ? 0 : i]);
      }
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.accum(ib);
      for (std::size_t i = 0; i < up.size(); ++i) {
        gb[b_sc ? 0 : i] += up[i] * db(av[a_sc ? 0 : i], bv[b_sc ? 0 : i]);
      }
    }
  });
}

template <class Fwd, class Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t ix = x.id();
  return g.make(std::move(out), {ix}, [ix, deriv](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& xv = g.value(ix);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.accum(ix);
    for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] * deriv(xv[i], yv[i]);
  });
}

void softmax_inplace(std::span<const double> v, std::span<double> out,
                     const std::vector<bool>* mask) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!mask || (*mask)[i]) m = std::max(m, v[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (!mask || (*mask)[i]) ? std::exp(v[i] - m) : 0.0;
    s += out[i];
  }
  for (double& o : out) o /= s;
}

void require_nonempty(const Tensor& t, const char* op) {
  if (t.empty()) throw ArgumentError(std::string(op) + ": empty input");
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double s, double shift) {
  return unary(
      a, [s, shift](double x) { return s * x + shift; }, [s](double, double) { return s; });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw ArgumentError("add_n: no terms");
  Graph& g = graph_of(terms.front());
  Tensor out(terms.front().shape());
  std::vector<std::size_t> ids;
  ids.reserve(terms.size());
  for (const Var& t : terms) {
    require_same_shape(out, t.value(), "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.value()[i];
    ids.push_back(t.id());
  }
  return g.make(std::move(out), ids, [](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    for (std::size_t in : g.inputs(self)) {
      if (!g.requires_grad(in)) continue;
      Tensor& gi = g.accum(in);
      for (std::size_t i = 0; i < up.size(); ++i) gi[i] += up[i];
    }
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  Tensor out(Shape{n, m});
  {
    const double* A = av.data();
    const double* B = bv.data();
    double* O = out.data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* Bp = B + p * m;
        double* Oi = O + i * m;
        for (std::size_t j = 0; j < m; ++j) Oi[j] += aip * Bp[j];
      }
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.make(std::move(out), {ia, ib}, [ia, ib, n, k, m](Graph& g, std::size_t self) {
    const double* U = g.upstream(self).data();
    const double* A = g.value(ia).data();
    const double* B = g.value(ib).data();
    if (g.requires_grad(ia)) {
      double* GA = g.accum(ia).data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* Ui = U + i * m;
          const double* Bp = B + p * m;
          for (std::size_t j = 0; j < m; ++j) s += Ui[j] * Bp[j];
          GA[i * k + p] += s;
        }
    }
    if (g.requires_grad(ib)) {
      double* GB = g.accum(ib).data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          const double* Ui = U + i * m;
          double* GBp = GB + p * m;
          for (std::size_t j = 0; j < m; ++j) GBp[j] += aip * Ui[j];
        }
    }
  });
}

Var matvec(Var w, Var x) {
  Graph& g = graph_of(w, x);
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  require_rank(wv, 2, "matvec");
  require_rank(xv, 1, "matvec");
  const std::size_t m = wv.rows(), n = wv.cols();
  if (xv.size() != n) {
    throw DimensionError("matvec: " + shape_str(wv.shape()) + " times " + shape_str(xv.shape()));
  }
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += wv.at(i, j) * xv[j];
    out[i] = s;
  }
  const std::size_t iw = w.id(), ix = x.id();
  return g.make(std::move(out), {iw, ix}, [iw, ix, m, n](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& wv = g.value(iw);
    const Tensor& xv = g.value(ix);
    if (g.requires_grad(iw)) {
      Tensor& gw = g.accum(iw);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gw.at(i, j) += up[i] * xv[j];
    }
    if (g.requires_grad(ix)) {
      Tensor& gx = g.accum(ix);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[j] += wv.at(i, j) * up[i];
    }
  });
}

Var add_row_broadcast(Var m, Var v) {
  Graph& g = graph_of(m, v);
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  require_rank(mv, 2, "add_row_broadcast");
  require_rank(vv, 1, "add_row_broadcast");
  if (vv.size() != mv.cols()) throw DimensionError("add_row_broadcast: width mismatch");
  Tensor out = mv;
  for (std::size_t r = 0; r < mv.rows(); ++r)
    for (std::size_t c = 0; c < mv.cols(); ++c) out.at(r, c) += vv[c];
  const std::size_t im = m.id(), iv = v.id();
  return g.make(std::move(out), {im, iv}, [im, iv](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (g.requires_grad(im)) {
      Tensor& gm = g.accum(im);
      for (std::size_t i = 0; i < up.size(); ++i) gm[i] += up[i];
    }
    if (g.requires_grad(iv)) {
      Tensor& gv = g.accum(iv);
      const std::size_t cols = gv.size();
      for (std::size_t i = 0; i < up.size(); ++i) gv[i % cols] += up[i];
    }
  });
}

Var transpose(Var m) {
  Graph& g = graph_of(m);
  const Tensor& mv = m.value();
  require_rank(mv, 2, "transpose");
  const std::size_t r = mv.rows(), c = mv.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = mv.at(i, j);
  const std::size_t im = m.id();
  return g.make(std::move(out), {im}, [im, r, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    Tensor& gm = g.accum(im);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gm.at(i, j) += up.at(j, i);
  });
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var activation(Activation kind, Var x) {
  return unary(
      x, [kind](double v) { return apply_activation(kind, v); },
      [kind](double v, double y) { return activation_derivative(kind, v, y); });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t ix = x.id();
  return g.make(Tensor::scalar(s), {ix}, [ix](Graph& g, std::size_t self) {
    const double up = g.upstream(self)[0];
    Tensor& gx = g.accum(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += up;
  });
}

Var mean(Var x) {
  require_nonempty(x.value(), "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Var mean_rows(Var m) {
  Graph& g = graph_of(m);
  const Tensor& mv = m.value();
  require_rank(mv, 2, "mean_rows");
  const std::size_t r = mv.rows(), c = mv.cols();
  if (r == 0) throw ArgumentError("mean_rows: no rows");
  Tensor out(Shape{c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += mv.at(i, j);
  for (double& v : out.span()) v /= static_cast<double>(r);
  const std::size_t im = m.id();
  return g.make(std::move(out), {im}, [im, r, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    Tensor& gm = g.accum(im);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gm.at(i, j) += up[j] * inv;
  });
}

Var mean_of(const std::vector<Var>& vectors) {
  if (vectors.empty()) throw ArgumentError("mean_of: empty group");
  return scale(add_n(vectors), 1.0 / static_cast<double>(vectors.size()));
}

Var concat(const std::vector<Var>& vectors) {
  if (vectors.empty()) throw ArgumentError("concat: no inputs");
  Graph& g = graph_of(vectors.front());
  std::vector<double> out;
  std::vector<std::size_t> ids;
  for (const Var& v : vectors) {
    require_rank(v.value(), 1, "concat");
    out.insert(out.end(), v.value().values().begin(), v.value().values().end());
    ids.push_back(v.id());
  }
  return g.make(Tensor::vector(std::move(out)), ids, [](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    std::size_t off = 0;
    for (std::size_t in : g.inputs(self)) {
      const std::size_t n = g.value(in).size();
      if (g.requires_grad(in)) {
        Tensor& gi = g.accum(in);
        for (std::size_t i = 0; i < n; ++i) gi[i] += up[off + i];
      }
      off += n;
    }
  });
}

Var slice(Var v, std::size_t begin, std::size_t len) {
  Graph& g = graph_of(v);
  const Tensor& vv = v.value();
  require_rank(vv, 1, "slice");
  if (begin + len > vv.size()) throw DimensionError("slice: range out of bounds");
  std::vector<double> out(vv.values().begin() + begin, vv.values().begin() + begin + len);
  const std::size_t iv = v.id();
  return g.make(Tensor::vector(std::move(out)), {iv}, [iv, begin, len](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    Tensor& gv = g.accum(iv);
    for (std::size_t i = 0; i < len; ++i) gv[begin + i] += up[i];
  });
}

Var stack_rows(const std::vector<Var>& vectors) {
  if (vectors.empty()) throw ArgumentError("stack_rows: no inputs");
  Graph& g = graph_of(vectors.front());
  const std::size_t c = vectors.front().size();
  std::vector<double> out;
  out.reserve(c * vectors.size());
  std::vector<std::size_t> ids;
  for (const Var& v : vectors) {
    require_rank(v.value(), 1, "stack_rows");
    if (v.size() != c) throw DimensionError("stack_rows: ragged rows");
    out.insert(out.end(), v.value().values().begin(), v.value().values().end());
    ids.push_back(v.id());
  }
  return g.make(Tensor::matrix(vectors.size(), c, std::move(out)), ids,
                [c](Graph& g, std::size_t self) {
                  const Tensor& up = g.upstream(self);
                  std::size_t r = 0;
                  for (std::size_t in : g.inputs(self)) {
                    if (g.requires_grad(in)) {
                      Tensor& gi = g.accum(in);
                      for (std::size_t j = 0; j < c; ++j) gi[j] += up[r * c + j];
                    }
                    ++r;
                  }
                });
}

Var row(Var m, std::size_t r) {
  return reshape(gather_rows(m, {r}), Shape{m.value().cols()});
}

Var gather_rows(Var m, const std::vector<std::size_t>& rows) {
  Graph& g = graph_of(m);
  const Tensor& mv = m.value();
  require_rank(mv, 2, "gather_rows");
  const std::size_t c = mv.cols();
  Tensor out(Shape{rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= mv.rows()) throw DimensionError("gather_rows: row index out of range");
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = mv.at(rows[i], j);
  }
  const std::size_t im = m.id();
  return g.make(std::move(out), {im}, [im, rows, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    Tensor& gm = g.accum(im);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gm.at(rows[i], j) += up.at(i, j);
  });
}

Var scatter_rows(Var base, const std::vector<std::size_t>& rows,
                 const std::vector<Var>& replacements) {
  Graph& g = graph_of(base);
  const Tensor& bv = base.value();
  require_rank(bv, 2, "scatter_rows");
  if (rows.size() != replacements.size()) throw ArgumentError("scatter_rows: count mismatch");
  const std::size_t c = bv.cols();
  Tensor out = bv;
  std::vector<bool> replaced(bv.rows(), false);
  std::vector<std::size_t> ids{base.id()};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= bv.rows()) throw DimensionError("scatter_rows: row index out of range");
    if (replaced[rows[i]]) throw ArgumentError("scatter_rows: duplicate row index");
    if (replacements[i].size() != c || replacements[i].value().rank() != 1) {
      throw DimensionError("scatter_rows: replacement width mismatch");
    }
    replaced[rows[i]] = true;
    for (std::size_t j = 0; j < c; ++j) out.at(rows[i], j) = replacements[i].value()[j];
    ids.push_back(replacements[i].id());
  }
  return g.make(std::move(out), ids, [rows, replaced, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const auto& ins = g.inputs(self);
    if (g.requires_grad(ins[0])) {
      Tensor& gb = g.accum(ins[0]);
      for (std::size_t r = 0; r < replaced.size(); ++r) {
        if (replaced[r]) continue;
        for (std::size_t j = 0; j < c; ++j) gb.at(r, j) += up.at(r, j);
      }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!g.requires_grad(ins[i + 1])) continue;
      Tensor& gr = g.accum(ins[i + 1]);
      for (std::size_t j = 0; j < c; ++j) gr[j] += up.at(rows[i], j);
    }
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  if (shape_size(shape) != x.size()) throw DimensionError("reshape: element count changes");
  const std::size_t ix = x.id();
  return g.make(x.value().reshaped(std::move(shape)), {ix}, [ix](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    Tensor& gx = g.accum(ix);
    for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i];
  });
}

Var pick(Var v, std::size_t i) {
  Graph& g = graph_of(v);
  if (i >= v.size()) throw DimensionError("pick: index out of range");
  const std::size_t iv = v.id();
  return g.make(Tensor::scalar(v.value()[i]), {iv}, [iv, i](Graph& g, std::size_t self) {
    g.accum(iv)[i] += g.upstream(self)[0];
  });
}

Var column(Var m, std::size_t c) {
  Graph& g = graph_of(m);
  const Tensor& mv = m.value();
  require_rank(mv, 2, "column");
  if (c >= mv.cols()) throw DimensionError("column: index out of range");
  Tensor out(Shape{mv.rows()});
  for (std::size_t r = 0; r < mv.rows(); ++r) out[r] = mv.at(r, c);
  const std::size_t im = m.id();
  return g.make(std::move(out), {im}, [im, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    Tensor& gm = g.accum(im);
    for (std::size_t r = 0; r < up.size(); ++r) gm.at(r, c) += up[r];
  });
}

namespace {

Var softmax_impl(Var v, const std::vector<bool>* mask) {
  Graph& g = graph_of(v);
  const Tensor& vv = v.value();
  require_rank(vv, 1, "softmax");
  require_nonempty(vv, "softmax");
  if (mask) {
    if (mask->size() != vv.size()) throw DimensionError("softmax: mask length mismatch");
    if (std::none_of(mask->begin(), mask->end(), [](bool b) { return b; })) {
      throw ArgumentError("softmax: every entry is masked");
    }
  }
  Tensor out(vv.shape());
  softmax_inplace(vv.span(), out.span(), mask);
  const std::size_t iv = v.id();
  return g.make(std::move(out), {iv}, [iv](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
    Tensor& gv = g.accum(iv);
    for (std::size_t i = 0; i < y.size(); ++i) gv[i] += y[i] * (up[i] - s);
  });
}

}  // namespace

Var softmax(Var v) { return softmax_impl(v, nullptr); }
Var softmax(Var v, const std::vector<bool>& mask) { return softmax_impl(v, &mask); }

Var log_softmax(Var v) {
  Graph& g = graph_of(v);
  const Tensor& vv = v.value();
  require_rank(vv, 1, "log_softmax");
  require_nonempty(vv, "log_softmax");
  const double m = *std::max_element(vv.values().begin(), vv.values().end());
  double s = 0.0;
  for (double x : vv.values()) s += std::exp(x - m);
  const double lse = m + std::log(s);
  Tensor out(vv.shape());
  for (std::size_t i = 0; i < vv.size(); ++i) out[i] = vv[i] - lse;
  const std::size_t iv = v.id();
  return g.make(std::move(out), {iv}, [iv](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    double s = 0.0;
    for (double u : up.values()) s += u;
    Tensor& gv = g.accum(iv);
    for (std::size_t i = 0; i < y.size(); ++i) gv[i] += up[i] - std::exp(y[i]) * s;
  });
}

Var logsumexp(Var v) {
  Graph& g = graph_of(v);
  const Tensor& vv = v.value();
  require_nonempty(vv, "logsumexp");
  const double m = *std::max_element(vv.values().begin(), vv.values().end());
  double s = 0.0;
  for (double x : vv.values()) s += std::exp(x - m);
  const std::size_t iv = v.id();
  return g.make(Tensor::scalar(m + std::log(s)), {iv}, [iv](Graph& g, std::size_t self) {
    const double up = g.upstream(self)[0];
    const double lse = g.value(self)[0];
    const Tensor& vv = g.value(iv);
    Tensor& gv = g.accum(iv);
    for (std::size_t i = 0; i < vv.size(); ++i) gv[i] += up * std::exp(vv[i] - lse);
  });
}

Var softmax_rows(Var m) {
  Graph& g = graph_of(m);
  const Tensor& mv = m.value();
  require_rank(mv, 2, "softmax_rows");
  const std::size_t r = mv.rows(), c = mv.cols();
  if (c == 0) throw ArgumentError("softmax_rows: empty rows");
  Tensor out(mv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    softmax_inplace(mv.span().subspan(i * c, c), out.span().subspan(i * c, c), nullptr);
  }
  const std::size_t im = m.id();
  return g.make(std::move(out), {im}, [im, r, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    Tensor& gm = g.accum(im);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += up.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < c; ++j) gm.at(i, j) += y.at(i, j) * (up.at(i, j) - s);
    }
  });
}

Var log_softmax_rows(Var m) {
  Graph& g = graph_of(m);
  const Tensor& mv = m.value();
  require_rank(mv, 2, "log_softmax_rows");
  const std::size_t r = mv.rows(), c = mv.cols();
  if (c == 0) throw ArgumentError("log_softmax_rows: empty rows");
  Tensor out(mv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    double mx = mv.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, mv.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(mv.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = mv.at(i, j) - lse;
  }
  const std::size_t im = m.id();
  return g.make(std::move(out), {im}, [im, r, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    Tensor& gm = g.accum(im);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += up.at(i, j);
      for (std::size_t j = 0; j < c; ++j) gm.at(i, j) += up.at(i, j) - std::exp(y.at(i, j)) * s;
    }
  });
}

Var sq_distance(Var a, Var b) { return sum(square(sub(a, b))); }

Var cosine_distance(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "cosine_distance");
  const double na = l2_norm(av.span()), nb = l2_norm(bv.span());
  if (na == 0.0 || nb == 0.0) throw ArgumentError("cosine_distance: zero vector");
  double ab = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) ab += av[i] * bv[i];
  const double cos = ab / (na * nb);
  const std::size_t ia = a.id(), ib = b.id();
  return g.make(Tensor::scalar(1.0 - cos), {ia, ib}, [ia, ib, na, nb, cos](Graph& g, std::size_t self) {
    const double up = g.upstream(self)[0];
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.accum(ia);
      for (std::size_t i = 0; i < av.size(); ++i)
        ga[i] -= up * (bv[i] / (na * nb) - cos * av[i] / (na * na));
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.accum(ib);
      for (std::size_t i = 0; i < bv.size(); ++i)
        gb[i] -= up * (av[i] / (na * nb) - cos * bv[i] / (nb * nb));
    }
  });
}

Var row_sq_distances(Var m, Var x) {
  Graph& g = graph_of(m, x);
  const Tensor& mv = m.value();
  const Tensor& xv = x.value();
  require_rank(mv, 2, "row_sq_distances");
  require_rank(xv, 1, "row_sq_distances");
  const std::size_t r = mv.rows(), c = mv.cols();
  if (xv.size() != c) throw DimensionError("row_sq_distances: width mismatch");
  Tensor out(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = mv.at(i, j) - xv[j];
      s += d * d;
    }
    out[i] = s;
  }
  const std::size_t im = m.id(), ix = x.id();
  return g.make(std::move(out), {im, ix}, [im, ix, r, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& mv = g.value(im);
    const Tensor& xv = g.value(ix);
    const bool gm_on = g.requires_grad(im), gx_on = g.requires_grad(ix);
    Tensor* gm = gm_on ? &g.accum(im) : nullptr;
    Tensor* gx = gx_on ? &g.accum(ix) : nullptr;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = 2.0 * (mv.at(i, j) - xv[j]) * up[i];
        if (gm) gm->at(i, j) += d;
        if (gx) (*gx)[j] -= d;
      }
  });
}

Var norm_clip(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const double n = l2_norm(xv.span());
  Tensor out = xv;
  if (n > 1.0) {
    for (double& v : out.span()) v /= n;
    // Rounding can leave the quotient one ulp above unit norm.
    while (l2_norm(out.span()) > 1.0) {
      for (double& v : out.span()) v *= std::nextafter(1.0, 0.0);
    }
  }
  const std::size_t ix = x.id();
  return g.make(std::move(out), {ix}, [ix, n](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& xv = g.value(ix);
    Tensor& gx = g.accum(ix);
    if (n <= 1.0) {
      for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i];
      return;
    }
    double xg = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) xg += xv[i] * up[i];
    for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] / n - xv[i] * xg / (n * n * n);
  });
}

Var kl_diag_gauss(Var mean_q, Var log_var_q, Var mean_p, Var log_var_p) {
  Graph& g = graph_of(mean_q, mean_p);
  const Tensor& mq = mean_q.value();
  const Tensor& lq = log_var_q.value();
  const Tensor& mp = mean_p.value();
  const Tensor& lp = log_var_p.value();
  if (mq.shape() != lq.shape() || mp.shape() != lp.shape() || mq.shape() != mp.shape()) {
    throw DimensionError("kl_diag_gauss: parameter dims disagree");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double d = mq[i] - mp[i];
    const double dv = lq[i] - lp[i];
    kl += std::expm1(dv) - dv + d * d * std::exp(-lp[i]);
  }
  const std::size_t i_mq = mean_q.id(), i_lq = log_var_q.id(), i_mp = mean_p.id(),
                    i_lp = log_var_p.id();
  return g.make(Tensor::scalar(0.5 * kl), {i_mq, i_lq, i_mp, i_lp},
                [i_mq, i_lq, i_mp, i_lp](Graph& g, std::size_t self) {
                  const double up = g.upstream(self)[0];
                  const Tensor& mq = g.value(i_mq);
                  const Tensor& lq = g.value(i_lq);
                  const Tensor& mp = g.value(i_mp);
                  const Tensor& lp = g.value(i_lp);
                  const std::size_t n = mq.size();
                  for (std::size_t i = 0; i < n; ++i) {
                    const double d = mq[i] - mp[i];
                    const double inv_p = std::exp(-lp[i]);
                    if (g.requires_grad(i_mq)) g.accum(i_mq)[i] += up * d * inv_p;
                    if (g.requires_grad(i_mp)) g.accum(i_mp)[i] -= up * d * inv_p;
                    if (g.requires_grad(i_lq))
                      g.accum(i_lq)[i] += up * 0.5 * std::expm1(lq[i] - lp[i]);
                    if (g.requires_grad(i_lp))
                      g.accum(i_lp)[i] -= up * 0.5 * (std::expm1(lq[i] - lp[i]) + d * d * inv_p);
                  }
                });
}

Var sample_gaussian(Var mean, Var log_var, const Tensor& eps) {
  Graph& g = graph_of(mean, log_var);
  const Tensor& mv = mean.value();
  const Tensor& lv = log_var.value();
  if (mv.shape() != lv.shape() || eps.shape() != mv.shape()) {
    throw DimensionError("sample_gaussian: noise " + shape_str(eps.shape()) +
                         " vs distribution " + shape_str(mv.shape()));
  }
  Tensor out(mv.shape());
  for (std::size_t i = 0; i < mv.size(); ++i) out[i] = mv[i] + std::exp(0.5 * lv[i]) * eps[i];
  const std::size_t im = mean.id(), il = log_var.id();
  return g.make(std::move(out), {im, il}, [im, il, eps](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (g.requires_grad(im)) {
      Tensor& gm = g.accum(im);
      for (std::size_t i = 0; i < up.size(); ++i) gm[i] += up[i];
    }
    if (g.requires_grad(il)) {
      const Tensor& lv = g.value(il);
      Tensor& gl = g.accum(il);
      for (std::size_t i = 0; i < up.size(); ++i)
        gl[i] += up[i] * 0.5 * std::exp(0.5 * lv[i]) * eps[i];
    }
  });
}

Var gaussian_log_density(Var x, Var mean, Var log_var) {
  const Tensor& xv = x.value();
  require_rank(xv, 1, "gaussian_log_density");
  return reshape(gaussian_log_density_rows(x, reshape(mean, Shape{1, xv.size()}),
                                           reshape(log_var, Shape{1, xv.size()})),
                 Shape{});
}

Var gaussian_log_density_rows(Var x, Var means, Var log_vars) {
  Graph& g = graph_of(x, means);
  const Tensor& xv = x.value();
  const Tensor& mv = means.value();
  const Tensor& lv = log_vars.value();
  require_rank(xv, 1, "gaussian_log_density_rows");
  require_rank(mv, 2, "gaussian_log_density_rows");
  if (mv.shape() != lv.shape() || mv.cols() != xv.size()) {
    throw DimensionError("gaussian_log_density_rows: dims disagree");
  }
  const std::size_t r = mv.rows(), c = mv.cols();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Tensor out(Shape{r});
  for (std::size_t a = 0; a < r; ++a) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xv[j] - mv.at(a, j);
      s += log2pi + lv.at(a, j) + d * d * std::exp(-lv.at(a, j));
    }
    out[a] = -0.5 * s;
  }
  const std::size_t ix = x.id(), im = means.id(), il = log_vars.id();
  return g.make(std::move(out), {ix, im, il}, [ix, im, il, r, c](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& xv = g.value(ix);
    const Tensor& mv = g.value(im);
    const Tensor& lv = g.value(il);
    Tensor* gx = g.requires_grad(ix) ? &g.accum(ix) : nullptr;
    Tensor* gm = g.requires_grad(im) ? &g.accum(im) : nullptr;
    Tensor* gl = g.requires_grad(il) ? &g.accum(il) : nullptr;
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t j = 0; j < c; ++j) {
        const double inv = std::exp(-lv.at(a, j));
        const double d = xv[j] - mv.at(a, j);
        if (gx) (*gx)[j] -= up[a] * d * inv;
        if (gm) gm->at(a, j) += up[a] * d * inv;
        if (gl) gl->at(a, j) += up[a] * 0.5 * (d * d * inv - 1.0);
      }
    }
  });
}

}  // namespace vsm
